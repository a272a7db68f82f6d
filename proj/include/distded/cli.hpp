#pragma once

/**
 * `distded` command line: collect, train, assess, early-warning, roc,
 * ablate and sweep.
 *
 * Option precedence is flags, then the TOML/INI file given to --config
 * (subcommand options live in a section named after the subcommand), then
 * DEADEND_SEED for the seed, then built-in defaults. Relative paths resolve
 * against --out-dir. Every command writes <stem>.manifest.json next to its
 * primary output with the resolved options, a re-run line and content hashes
 * of inputs and outputs.
 *
 * Exit codes: 0 success, 2 usage/config error, 3 integrity error, 4 I/O
 * error, 1 anything else.
 */

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "distded/eval.hpp"

namespace distded::cli {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct TrainOptions {
  std::string method = "distded";
  std::optional<double> beta;
  int epochs = 50;
  double lr = 1e-3;
  int batch_size = 128;
  int n_taus = 8;
  int n_target_taus = 8;
  int hidden = 32;
  int embed_dim = 64;
  std::string target_update = "hard";
  std::optional<int> target_every;  // hard: 1000, ema: 5
  double ema_rate = 0.005;
  double neg_frac = 0.25;
  bool cql_per_tau = false;
};

struct Context {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::ostream* out = &std::cout;

  std::string path(const std::string& p) const {
    const fs::path q(p);
    return q.is_absolute() ? q.string() : (fs::path(out_dir) / q).string();
  }
};

inline void add_train_options(CLI::App* sub, TrainOptions& o, bool with_method) {
  if (with_method)
    sub->add_option("--method", o.method, "ded | ded+cql | distded | distded-cql")
        ->check(CLI::IsMember({"ded", "ded+cql", "ded_cql", "distded", "distded-cql", "distded_no_cql"}));
  sub->add_option("--beta", o.beta, "CQL penalty weight (penalized methods only)");
  sub->add_option("--epochs", o.epochs, "training epochs");
  sub->add_option("--lr", o.lr, "Adam learning rate");
  sub->add_option("--batch-size", o.batch_size, "minibatch size");
  sub->add_option("--n-taus", o.n_taus, "online quantile samples per transition");
  sub->add_option("--n-target-taus", o.n_target_taus, "target quantile samples per transition");
  sub->add_option("--hidden", o.hidden, "hidden width");
  sub->add_option("--embed-dim", o.embed_dim, "cosine embedding size");
  sub->add_option("--target-update", o.target_update, "hard | ema")->check(CLI::IsMember({"hard", "ema"}));
  sub->add_option("--target-every", o.target_every, "steps between target updates");
  sub->add_option("--ema-rate", o.ema_rate, "EMA rate for --target-update ema");
  sub->add_option("--neg-frac", o.neg_frac, "minibatch share drawn from negative terminals");
  sub->add_flag("--cql-per-tau", o.cql_per_tau, "apply CQL per sampled tau");
}

inline TrainConfig to_config(const TrainOptions& o, std::uint64_t seed, bool penalized) {
  TrainConfig c;
  c.n_online_taus = o.n_taus;
  c.n_target_taus = o.n_target_taus;
  c.beta = penalized ? o.beta.value_or(0.1) : 0.0;
  c.epochs = o.epochs;
  c.lr = o.lr;
  c.batch_size = o.batch_size;
  c.target_update = o.target_update == "ema" ? TargetUpdate::ema(o.ema_rate, o.target_every.value_or(5))
                                             : TargetUpdate::hard(o.target_every.value_or(1000));
  c.neg_terminal_frac = o.neg_frac;
  c.seed = seed;
  c.hidden = o.hidden;
  c.embed_dim = o.embed_dim;
  c.cql_per_tau = o.cql_per_tau;
  c.validate();
  return c;
}

inline GridSpec load_spec(const Context& ctx, const std::string& env_path) {
  if (env_path.empty()) return GridSpec::lifegate();
  try {
    return nlohmann::json::parse(read_file(ctx.path(env_path))).get<GridSpec>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("env spec is not valid JSON: ") + e.what());
  }
}

/// Resolved option values of a subcommand (and the global options), as JSON
/// plus an equivalent command line.
inline std::pair<ojson, std::string> resolved_options(const CLI::App& app, const CLI::App& sub) {
  ojson opts = ojson::object();
  std::string line = "distded";
  auto add = [&](const CLI::Option* o) {
    if (o->get_lnames().empty()) return;
    const std::string name = o->get_lnames().front();
    if (name == "help" || name == "config") return;
    std::vector<std::string> vals = o->results();
    if (vals.empty() && !o->get_default_str().empty()) vals = {o->get_default_str()};
    if (o->get_type_size() == 0) {  // flag
      const bool on = o->count() > 0 || (!vals.empty() && vals.front() == "true");
      opts[name] = on;
      if (on) line += " --" + name;
      return;
    }
    if (vals.empty()) return;
    opts[name] = vals.size() == 1 && o->get_expected_max() <= 1 ? ojson(vals.front()) : ojson(vals);
    for (const auto& v : vals) line += " --" + name + " " + v;
  };
  for (const auto* o : app.get_options()) add(o);
  line += " " + sub.get_name();
  for (const auto* o : sub.get_options()) add(o);
  return {opts, line};
}

struct Manifest {
  ojson inputs = ojson::object();
  ojson outputs = ojson::object();
  ojson extra = ojson::object();

  void input(const std::string& label, const std::string& path) { inputs[label] = content_hash(read_file(path)); }
  void output(const Context& ctx, const std::string& name, const std::string& bytes) {
    write_file(ctx.path(name), bytes);
    outputs[name] = content_hash(bytes);
  }
};

inline void write_manifest(const Context& ctx, const CLI::App& app, const CLI::App& sub, const std::string& stem,
                           const Manifest& m) {
  auto [opts, line] = resolved_options(app, sub);
  ojson j{{"format", "distded-run"},
          {"command", sub.get_name()},
          {"seed", ctx.seed},
          {"options", opts},
          {"rerun", line},
          {"inputs", m.inputs},
          {"outputs", m.outputs}};
  for (const auto& [k, v] : m.extra.items()) j[k] = v;
  write_file(ctx.path(stem + ".manifest.json"), j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Head pairs on disk: <prefix>.D.{json,bin}, <prefix>.R.{json,bin} and the
// pair manifest <prefix>.json binding them to a method and an environment.

struct StoredPair {
  Method method;
  HeadPair<float> pair;
  TrainConfig config;
  std::string env_hash;
};

inline StoredPair load_pair(const Context& ctx, const std::string& prefix, const GridSpec& spec) {
  const std::string base = ctx.path(prefix);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(read_file(base + ".json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("head-pair manifest is not JSON: ") + e.what());
  }
  if (m.value("format", "") != "distded-head-pair") throw FormatError(base + ".json is not a head-pair manifest");
  StoredPair sp;
  sp.method = method_from_string(m.at("method").get<std::string>());
  sp.env_hash = m.at("env_hash").get<std::string>();
  if (sp.env_hash != spec_hash(spec))
    throw IntegrityError("checkpoint was trained on environment " + sp.env_hash + " but --env hashes to " +
                         spec_hash(spec));
  for (const char* mode : {"D", "R"}) {
    const std::string p = base + "." + mode;
    if (content_hash(read_file(p + ".json")) != m.at("heads").at(mode).get<std::string>())
      throw IntegrityError("head manifest " + p + ".json does not match the pair manifest");
  }
  auto d = load_head<float>(base + ".D");
  auto r = load_head<float>(base + ".R");
  if (d.head.kind != head_kind_for(sp.method) || r.head.kind != head_kind_for(sp.method))
    throw IntegrityError("head kinds do not match the recorded method");
  sp.config = d.config;
  sp.pair = {std::move(d.head), std::move(r.head), {}, {}};
  return sp;
}

inline ojson save_pair(const Context& ctx, const std::string& prefix, Method method, const HeadPair<float>& p,
                       const TrainConfig& cfg, const std::string& env_hash, const std::string& dataset_hash,
                       Manifest& man) {
  const std::string base = ctx.path(prefix);
  save_head(p.d, cfg, base + ".D");
  save_head(p.r, cfg, base + ".R");
  for (const char* f : {".D.json", ".D.bin", ".R.json", ".R.bin"})
    man.outputs[prefix + f] = content_hash(read_file(base + f));
  man.output(ctx, prefix + ".D.loss.csv", p.d_log.csv());
  man.output(ctx, prefix + ".R.loss.csv", p.r_log.csv());
  ojson pm{{"format", "distded-head-pair"},
           {"method", to_string(method)},
           {"env_hash", env_hash},
           {"dataset_hash", dataset_hash},
           {"config_hash", config_hash(cfg)},
           {"heads", {{"D", content_hash(read_file(base + ".D.json"))}, {"R", content_hash(read_file(base + ".R.json"))}}}};
  man.output(ctx, prefix + ".json", pm.dump(2) + "\n");
  return pm;
}

inline OfflineDataset load_checked_dataset(const Context& ctx, const std::string& data, const GridSpec& spec,
                                           Manifest& man) {
  const std::string path = ctx.path(data);
  OfflineDataset ds = load_dataset(path);
  if (ds.metadata().env_hash != spec_hash(spec))
    throw IntegrityError("dataset was collected on environment " + ds.metadata().env_hash + " but --env hashes to " +
                         spec_hash(spec));
  man.input(data, path);
  return ds;
}

inline EvalSettings eval_settings(int alpha_points, int n_thresholds, int k_eval, std::uint64_t seed) {
  if (alpha_points < 1) throw UsageError("--alpha-points must be at least 1");
  EvalSettings es;
  es.alphas = alpha_grid(alpha_points);
  es.n_thresholds = n_thresholds;
  es.k_eval = k_eval;
  es.assess_seed = seed;
  return es;
}

// Seeds for the parts of a run that draw randomness independently.
inline std::uint64_t rollout_seed(std::uint64_t seed) { return derive_seed(seed, 1001); }
inline std::uint64_t holdout_seed(std::uint64_t seed) { return derive_seed(seed, 1002); }
inline std::uint64_t subsample_seed(std::uint64_t seed) { return derive_seed(seed, 1003); }

// ---------------------------------------------------------------------------

/// Parses and runs one command. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Distributional dead-end discovery on LifeGate", "distded"};
  app.option_defaults()->always_capture_default();
  app.fallthrough();
  app.require_subcommand(1);
  app.set_config("--config", "", "TOML/INI file with option values; sections name subcommands");

  Context ctx;
  ctx.out = &out;
  app.add_option("--seed", ctx.seed, "base seed")->envname("DEADEND_SEED");
  app.add_option("--out-dir", ctx.out_dir, "directory for outputs; relative paths resolve here");

  // collect
  std::string env_path;
  long long n_transitions = 200000;
  std::string collect_out = "data.jsonl";
  auto* collect = app.add_subcommand("collect", "collect a uniform-random offline dataset");
  collect->add_option("--env", env_path, "environment spec JSON (default: built-in LifeGate)");
  collect->add_option("--n", n_transitions, "minimum transitions to collect");
  collect->add_option("--out", collect_out, "dataset file");

  // train
  std::string data_path = "data.jsonl";
  std::string heads_out = "heads";
  TrainOptions topt;
  auto* train_cmd = app.add_subcommand("train", "train the D- and R-heads of one method");
  train_cmd->add_option("--env", env_path, "environment spec JSON");
  train_cmd->add_option("--data", data_path, "dataset file");
  train_cmd->add_option("--out", heads_out, "checkpoint prefix");
  add_train_options(train_cmd, topt, true);

  // evaluation options shared by several commands
  std::string heads = "heads";
  std::optional<double> alpha, delta_d, delta_r;
  int k_eval = 1000;
  int n_rollouts = 1000;
  int n_thresholds = 100;
  int alpha_points = 50;
  int n_trajectories = 1000;
  double stochasticity = 0.1;
  double holdout_stochasticity = 0.2;
  std::string report_out;

  auto* assess_cmd = app.add_subcommand("assess", "dead-end verdicts for every non-terminal cell");
  assess_cmd->add_option("--env", env_path, "environment spec JSON");
  assess_cmd->add_option("--heads", heads, "checkpoint prefix");
  assess_cmd->add_option("--alpha", alpha, "CVaR level (distributional methods)");
  assess_cmd->add_option("--delta-d", delta_d, "D threshold");
  assess_cmd->add_option("--delta-r", delta_r, "R threshold");
  assess_cmd->add_option("--k-eval", k_eval, "quantile samples per state");
  assess_cmd->add_option("--out", report_out, "CSV file (default assess.csv)");

  std::string baseline;
  std::optional<double> baseline_delta_d;
  auto* ew_cmd = app.add_subcommand("early-warning", "alarm-to-zone-entry gaps on paired rollouts");
  ew_cmd->add_option("--env", env_path, "environment spec JSON");
  ew_cmd->add_option("--heads", heads, "checkpoint prefix of the evaluated method");
  ew_cmd->add_option("--baseline", baseline, "checkpoint prefix of the reference method (optional)");
  ew_cmd->add_option("--alpha", alpha, "CVaR level");
  ew_cmd->add_option("--delta-d", delta_d, "alarm threshold for --heads");
  ew_cmd->add_option("--baseline-delta-d", baseline_delta_d, "alarm threshold for --baseline");
  ew_cmd->add_option("--k-eval", k_eval, "quantile samples per state");
  ew_cmd->add_option("--n-rollouts", n_rollouts, "rollouts, alternating the two zone-crossing policies");
  ew_cmd->add_option("--stochasticity", stochasticity, "random-action probability of the rollout policies");
  ew_cmd->add_option("--out", report_out, "CSV file (default early_warning.csv)");

  std::vector<std::string> roc_heads;
  auto* roc_cmd = app.add_subcommand("roc", "ROC/AUC sweep over coupled thresholds");
  roc_cmd->add_option("--env", env_path, "environment spec JSON");
  roc_cmd->add_option("--heads", roc_heads, "one or more checkpoint prefixes")->expected(1, -1);
  roc_cmd->add_option("--n-thresholds", n_thresholds, "delta_d settings in [-1, 0]");
  roc_cmd->add_option("--alpha-points", alpha_points, "alpha grid size for distributional methods");
  roc_cmd->add_option("--n-trajectories", n_trajectories, "held-out mixed-outcome trajectories");
  roc_cmd->add_option("--stochasticity", holdout_stochasticity, "random-action probability of held-out policies");
  roc_cmd->add_option("--k-eval", k_eval, "quantile samples per state");
  roc_cmd->add_option("--out", report_out, "CSV stem (default roc)");

  TrainOptions aopt;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and score the DDQN/IQN x penalty grid");
  ablate_cmd->add_option("--env", env_path, "environment spec JSON");
  ablate_cmd->add_option("--data", data_path, "dataset file");
  add_train_options(ablate_cmd, aopt, false);
  ablate_cmd->add_option("--n-thresholds", n_thresholds, "delta_d settings in [-1, 0]");
  ablate_cmd->add_option("--alpha-points", alpha_points, "alpha grid size");
  ablate_cmd->add_option("--n-trajectories", n_trajectories, "held-out mixed-outcome trajectories");
  ablate_cmd->add_option("--stochasticity", holdout_stochasticity, "random-action probability of held-out policies");
  ablate_cmd->add_option("--k-eval", k_eval, "quantile samples per state");
  ablate_cmd->add_option("--out", report_out, "CSV stem (default ablation)");

  TrainOptions sopt;
  std::string sweep_kind = "beta";
  std::vector<double> betas{0.0, 0.035, 0.1, 0.2, 0.3, 0.4};
  std::vector<double> fractions{0.10, 0.25, 0.50, 0.75, 1.0};
  std::vector<int> time_bins{1, 2, 4, 8, 16, 32};
  int value_bins = 20;
  auto* sweep_cmd = app.add_subcommand("sweep", "beta, data-fraction or threshold-histogram sweep");
  sweep_cmd->add_option("--kind", sweep_kind, "beta | fraction | histogram")
      ->check(CLI::IsMember({"beta", "fraction", "histogram"}));
  sweep_cmd->add_option("--env", env_path, "environment spec JSON");
  sweep_cmd->add_option("--data", data_path, "dataset file (beta, fraction)");
  sweep_cmd->add_option("--heads", heads, "checkpoint prefix (histogram)");
  sweep_cmd->add_option("--betas", betas, "beta grid")->expected(1, -1);
  sweep_cmd->add_option("--fractions", fractions, "training-data fractions")->expected(1, -1);
  sweep_cmd->add_option("--time-bins", time_bins, "steps-to-termination bin edges")->expected(1, -1);
  sweep_cmd->add_option("--value-bins", value_bins, "histogram bins per head");
  add_train_options(sweep_cmd, sopt, false);
  sweep_cmd->add_option("--n-thresholds", n_thresholds, "delta_d settings in [-1, 0]");
  sweep_cmd->add_option("--alpha-points", alpha_points, "alpha grid size");
  sweep_cmd->add_option("--n-trajectories", n_trajectories, "held-out mixed-outcome trajectories");
  sweep_cmd->add_option("--stochasticity", holdout_stochasticity, "random-action probability of held-out policies");
  sweep_cmd->add_option("--k-eval", k_eval, "quantile samples per state");
  sweep_cmd->add_option("--out", report_out, "CSV stem (default <kind>_sweep)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    fs::create_directories(ctx.out_dir);
    CLI::App* sub = app.get_subcommands().front();
    Manifest man;
    const GridSpec spec = load_spec(ctx, env_path);
    if (!env_path.empty()) man.input(env_path, ctx.path(env_path));
    const LifeGate env(spec);
    man.extra["env_hash"] = spec_hash(spec);

    if (sub == collect) {
      if (n_transitions < 1) throw UsageError("--n must be at least 1");
      const auto ds = collect_random(env, static_cast<std::size_t>(n_transitions), ctx.seed);
      man.output(ctx, collect_out, serialize(ds));
      man.extra["size"] = ds.size();
      man.extra["trajectories"] = ds.trajectories().size();
      write_manifest(ctx, app, *sub, collect_out, man);
      out << "collected " << ds.size() << " transitions in " << ds.trajectories().size() << " trajectories -> "
          << ctx.path(collect_out) << "\n";
      return 0;
    }

    if (sub == train_cmd) {
      const Method method = method_from_string(topt.method);
      if (!uses_cql(method) && topt.beta)
        throw UsageError(std::string("--beta is not accepted for method ") + to_string(method));
      const auto ds = load_checked_dataset(ctx, data_path, spec, man);
      const TrainConfig cfg = to_config(topt, ctx.seed, uses_cql(method));
      const auto pair = train_pair<float>(ds, method, cfg);
      save_pair(ctx, heads_out, method, pair, cfg, spec_hash(spec), man.inputs[data_path], man);
      man.extra["method"] = to_string(method);
      man.extra["config"] = nlohmann::json(cfg);
      man.extra["config_hash"] = config_hash(cfg);
      write_manifest(ctx, app, *sub, heads_out, man);
      out << "trained " << to_string(method) << " heads -> " << ctx.path(heads_out) << ".{D,R}\n";
      return 0;
    }

    if (sub == assess_cmd) {
      const auto sp = load_pair(ctx, heads, spec);
      man.input(heads + ".json", ctx.path(heads + ".json"));
      const auto th = Thresholds::defaults(sp.method);
      auto as = make_assessor(sp.pair, sp.method, alpha.value_or(0.1), ctx.seed, k_eval)
                    .with_thresholds(delta_d.value_or(th.delta_d), delta_r.value_or(th.delta_r));
      AssessmentCache<float> cache(as);
      std::ostringstream o;
      o << "x,y,median_d,median_r,alarm_score,dead_end";
      for (int a = 0; a < kActionCount; ++a) o << ",value_d" << a << ",value_r" << a << ",avoid" << a;
      o << '\n';
      for (const Cell c : env.nonterminal_cells()) {
        const auto a = cache.assess(spec.features(c));
        o << c.x << ',' << c.y << ',' << csv_number(a.median_d) << ',' << csv_number(a.median_r) << ','
          << csv_number(a.alarm_score) << ',' << (a.is_dead_end ? 1 : 0);
        for (std::size_t k = 0; k < a.value_d.size(); ++k)
          o << ',' << csv_number(a.value_d[k]) << ',' << csv_number(a.value_r[k]) << ',' << (a.avoid[k] ? 1 : 0);
        o << '\n';
      }
      const std::string name = report_out.empty() ? "assess.csv" : report_out;
      man.output(ctx, name, o.str());
      man.extra["method"] = to_string(sp.method);
      man.extra["thresholds"] = {{"alpha", as.alpha}, {"delta_d", as.delta_d}, {"delta_r", as.delta_r}};
      write_manifest(ctx, app, *sub, name, man);
      out << "assessed " << env.nonterminal_cells().size() << " cells -> " << ctx.path(name) << "\n";
      return 0;
    }

    if (sub == ew_cmd) {
      if (n_rollouts < 1) throw UsageError("--n-rollouts must be at least 1");
      std::vector<std::pair<std::string, RiskAssessor<float>>> assessors;
      auto add = [&](const std::string& prefix, std::optional<double> dd) {
        const auto sp = load_pair(ctx, prefix, spec);
        man.input(prefix + ".json", ctx.path(prefix + ".json"));
        auto as = make_assessor(sp.pair, sp.method, alpha.value_or(0.1), ctx.seed, k_eval);
        if (dd) as = as.with_thresholds(*dd, as.delta_r);
        as.validate();
        assessors.emplace_back(prefix, std::move(as));
      };
      if (!baseline.empty()) add(baseline, baseline_delta_d);
      add(heads, delta_d);
      const auto p = hand_designed_policies(env, stochasticity);
      const auto trajs = policy_rollouts(env, {p.through_zone_low, p.through_zone_high}, n_rollouts, rollout_seed(ctx.seed));
      const auto rep = early_warning_study(assessors, trajs);
      const std::string name = report_out.empty() ? "early_warning.csv" : report_out;
      man.output(ctx, name, rep.csv());
      ojson summary = ojson::array();
      auto stats_json = [](const GapStats& s) {
        return ojson{{"count", s.count},      {"mean", s.mean}, {"median", s.median},
                     {"q1", s.q1},            {"q3", s.q3},     {"missed_fraction", s.missed_fraction}};
      };
      for (std::size_t k = 0; k < rep.names.size(); ++k)
        summary.push_back({{"assessor", rep.names[k]}, {"gaps", stats_json(rep.stats[k])}});
      man.extra["summary"] = summary;
      if (!rep.paired_stats.empty()) man.extra["paired_difference"] = stats_json(rep.paired_stats.front());
      write_manifest(ctx, app, *sub, name, man);
      for (std::size_t k = 0; k < rep.names.size(); ++k)
        out << rep.names[k] << ": mean gap " << rep.stats[k].mean << " over " << rep.stats[k].count
            << " trajectories, missed " << rep.stats[k].missed_fraction << "\n";
      if (!rep.paired_stats.empty()) out << "paired difference: " << rep.paired_stats.front().mean << "\n";
      return 0;
    }

    const EvalSettings es = eval_settings(alpha_points, n_thresholds, k_eval, ctx.seed);
    auto holdout = [&] { return mixed_outcome_trajectories(env, n_trajectories, holdout_seed(ctx.seed), holdout_stochasticity); };

    if (sub == roc_cmd) {
      if (roc_heads.empty()) roc_heads.push_back(heads);
      const auto trajs = holdout();
      std::vector<SweepReport> all;
      for (const auto& prefix : roc_heads) {
        const auto sp = load_pair(ctx, prefix, spec);
        man.input(prefix + ".json", ctx.path(prefix + ".json"));
        AssessmentCache<float> cache(make_assessor(sp.pair, sp.method, 0.1, ctx.seed, k_eval));
        auto reps = alpha_sweep(cache, trajs, es.alphas, sp.config.beta, 1.0, es.n_thresholds);
        const auto& best = best_by_auc(reps);
        out << prefix << " (" << to_string(sp.method) << "): max AUC " << best.auc;
        if (is_distributional(sp.method)) out << " at alpha " << best.alpha;
        out << "\n";
        all.insert(all.end(), reps.begin(), reps.end());
      }
      const std::string stem = report_out.empty() ? "roc" : report_out;
      man.output(ctx, stem + ".csv", roc_csv(all));
      man.output(ctx, stem + "_auc.csv", auc_csv(all));
      write_manifest(ctx, app, *sub, stem, man);
      return 0;
    }

    if (sub == ablate_cmd) {
      const auto ds = load_checked_dataset(ctx, data_path, spec, man);
      const TrainConfig cfg = to_config(aopt, ctx.seed, true);
      PairTrainer<float> trainer;
      const auto cells = ablation_matrix(trainer, ds, cfg, holdout(), es);
      const std::string stem = report_out.empty() ? "ablation" : report_out;
      std::vector<SweepReport> all;
      for (const auto& c : cells) all.insert(all.end(), c.reports.begin(), c.reports.end());
      man.output(ctx, stem + ".csv", ablation_csv(cells));
      man.output(ctx, stem + "_roc.csv", roc_csv(all));
      man.extra["config_hash"] = config_hash(cfg);
      write_manifest(ctx, app, *sub, stem, man);
      out << ablation_csv(cells);
      return 0;
    }

    if (sub == sweep_cmd) {
      const std::string stem = report_out.empty() ? sweep_kind + "_sweep" : report_out;
      if (sweep_kind == "histogram") {
        const auto sp = load_pair(ctx, heads, spec);
        man.input(heads + ".json", ctx.path(heads + ".json"));
        AssessmentCache<float> cache(make_assessor(sp.pair, sp.method, 0.1, ctx.seed, k_eval));
        const auto h = threshold_histograms(cache, holdout(), time_bins, value_bins);
        man.output(ctx, stem + ".csv", h.csv());
        write_manifest(ctx, app, *sub, stem, man);
        out << "histograms -> " << ctx.path(stem + ".csv") << "\n";
        return 0;
      }
      const auto ds = load_checked_dataset(ctx, data_path, spec, man);
      const TrainConfig cfg = to_config(sopt, ctx.seed, true);
      man.extra["config_hash"] = config_hash(cfg);
      PairTrainer<float> trainer;
      const auto trajs = holdout();
      if (sweep_kind == "beta") {
        const auto rows = beta_sweep(trainer, ds, cfg, betas, trajs, es);
        man.output(ctx, stem + ".csv", beta_sweep_csv(rows));
        for (const auto& r : rows) out << "beta " << r.beta << ": max AUC " << r.max_auc << " at alpha " << r.best_alpha << "\n";
      } else {
        for (double f : fractions)
          if (!(f > 0 && f <= 1)) throw UsageError("fractions must lie in (0, 1]");
        const auto rows = data_fraction_sweep(trainer, ds, cfg, fractions, trajs, es, subsample_seed(ctx.seed));
        man.output(ctx, stem + ".csv", fraction_csv(rows));
        out << fraction_csv(rows);
      }
      write_manifest(ctx, app, *sub, stem, man);
      return 0;
    }
    throw UsageError("no command");
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IntegrityError& e) {
    err << "integrity error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace distded::cli
