#pragma once

/**
 * Evaluation harness on LifeGate: early-warning gaps, ROC/AUC threshold
 * sweeps, the DDQN/IQN x penalty ablation grid, beta and data-fraction
 * sweeps, and per-time-bin value histograms.
 *
 * Two notions of a "flagged" trajectory are used and never mixed:
 *  - ROC sweeps: some state of the trajectory is a dead-end (median rule,
 *    delta_r = 1 + delta_d).
 *  - Early warning: the first state whose alarm score is <= delta_d.
 */

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "distded/dead_end.hpp"

namespace distded {

// ---------------------------------------------------------------------------
// Trajectory sets

/// Rollout i follows policies[i % n] with seed base_seed + i.
inline std::vector<TrajectoryRecord> policy_rollouts(const LifeGate& env, const std::vector<FixedPolicy>& policies,
                                                     int n_rollouts, std::uint64_t base_seed) {
  if (n_rollouts < 1) throw UsageError("need at least one rollout");
  if (policies.empty()) throw UsageError("need at least one policy");
  std::vector<TrajectoryRecord> out;
  out.reserve(static_cast<std::size_t>(n_rollouts));
  for (int i = 0; i < n_rollouts; ++i) {
    Rng rng(base_seed + static_cast<std::uint64_t>(i));
    out.push_back(rollout(env, policies[static_cast<std::size_t>(i) % policies.size()], rng));
  }
  return out;
}

/// Held-out evaluation set: all three hand-designed policies executed with
/// epsilon-random actions, so both outcomes occur.
inline std::vector<TrajectoryRecord> mixed_outcome_trajectories(const LifeGate& env, int n, std::uint64_t seed,
                                                                double stochasticity = 0.2) {
  const auto p = hand_designed_policies(env, stochasticity);
  return policy_rollouts(env, {p.safe, p.through_zone_low, p.through_zone_high}, n, seed);
}

// ---------------------------------------------------------------------------
// Early warning

struct GapSample {
  int trajectory = 0;
  std::optional<int> alarm;
  std::optional<int> zone_entry;
  std::optional<int> gap;  // zone_entry - alarm; positive means earlier
};

struct GapStats {
  std::size_t count = 0;
  double mean = NAN;
  double median = NAN;
  double q1 = NAN;
  double q3 = NAN;
  double missed_fraction = NAN;  // negative-outcome trajectories never alarmed
};

namespace detail {

// Linear-interpolated quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& s, double q) {
  if (s.empty()) return NAN;
  const double pos = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (pos - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

}  // namespace detail

inline GapStats summarize(const std::vector<double>& values) {
  GapStats st;
  std::vector<double> s = values;
  std::sort(s.begin(), s.end());
  st.count = s.size();
  if (!s.empty()) {
    double sum = 0;
    for (double v : s) sum += v;
    st.mean = sum / static_cast<double>(s.size());
    st.median = detail::quantile_sorted(s, 0.5);
    st.q1 = detail::quantile_sorted(s, 0.25);
    st.q3 = detail::quantile_sorted(s, 0.75);
  }
  return st;
}

inline GapStats gap_stats(const std::vector<GapSample>& samples, const std::vector<TrajectoryRecord>& trajs) {
  std::vector<double> gaps;
  std::size_t negatives = 0, missed = 0;
  for (const auto& g : samples) {
    if (g.gap) gaps.push_back(*g.gap);
    if (trajs[static_cast<std::size_t>(g.trajectory)].outcome == Outcome::negative) {
      ++negatives;
      if (!g.alarm) ++missed;
    }
  }
  GapStats st = summarize(gaps);
  st.missed_fraction = negatives ? static_cast<double>(missed) / static_cast<double>(negatives) : NAN;
  return st;
}

struct EarlyWarningReport {
  std::vector<std::string> names;
  std::vector<std::vector<GapSample>> gaps;  // per assessor, per trajectory
  std::vector<GapStats> stats;
  // gap[k] - gap[0] on trajectories where both are defined, for k >= 1.
  std::vector<std::vector<double>> paired_differences;
  std::vector<GapStats> paired_stats;

  std::string csv() const {
    std::ostringstream o;
    o << "assessor,trajectory,alarm,zone_entry,gap\n";
    auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
    for (std::size_t k = 0; k < names.size(); ++k)
      for (const auto& g : gaps[k])
        o << names[k] << ',' << g.trajectory << ',' << opt(g.alarm) << ',' << opt(g.zone_entry) << ',' << opt(g.gap)
          << '\n';
    return o.str();
  }
};

/// Alarms and zone entries for one assessor over a shared trajectory set.
template <class T>
std::vector<GapSample> gap_samples(AssessmentCache<T>& cache, const std::vector<TrajectoryRecord>& trajs) {
  std::vector<GapSample> out;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    GapSample g;
    g.trajectory = static_cast<int>(i);
    g.alarm = trajectory_alarm(cache, trajs[i]);
    g.zone_entry = trajs[i].zone_entry_index;
    if (g.alarm && g.zone_entry) g.gap = *g.zone_entry - *g.alarm;
    out.push_back(g);
  }
  return out;
}

/// Every assessor sees the identical rollouts (paired comparison); the first
/// assessor is the reference for paired differences.
template <class T>
EarlyWarningReport early_warning_study(const std::vector<std::pair<std::string, RiskAssessor<T>>>& assessors,
                                       const std::vector<TrajectoryRecord>& trajs) {
  if (trajs.empty()) throw UsageError("early warning study needs at least one rollout");
  EarlyWarningReport rep;
  for (const auto& [name, as] : assessors) {
    AssessmentCache<T> cache(as);
    rep.names.push_back(name);
    rep.gaps.push_back(gap_samples(cache, trajs));
    rep.stats.push_back(gap_stats(rep.gaps.back(), trajs));
  }
  for (std::size_t k = 1; k < rep.gaps.size(); ++k) {
    std::vector<double> diff;
    for (std::size_t i = 0; i < trajs.size(); ++i)
      if (rep.gaps[k][i].gap && rep.gaps[0][i].gap) diff.push_back(*rep.gaps[k][i].gap - *rep.gaps[0][i].gap);
    rep.paired_stats.push_back(summarize(diff));
    rep.paired_differences.push_back(std::move(diff));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// ROC / AUC

struct RocPoint {
  double delta_d = 0;
  double delta_r = 0;
  double tpr = 0;
  double fpr = 0;
};

/// Per-state (median_d, median_r) along one trajectory.
struct TrajectoryMedians {
  Outcome outcome = Outcome::timeout;
  std::vector<double> median_d;
  std::vector<double> median_r;
};

template <class T>
std::vector<TrajectoryMedians> trajectory_medians(AssessmentCache<T>& cache, const std::vector<TrajectoryRecord>& trajs,
                                                  std::optional<double> alpha = std::nullopt) {
  std::vector<TrajectoryMedians> out;
  out.reserve(trajs.size());
  for (const auto& tr : trajs) {
    TrajectoryMedians m;
    m.outcome = tr.outcome;
    for (const auto& t : tr.transitions) {
      const auto a = cache.assess(t.state, alpha);
      m.median_d.push_back(a.median_d);
      m.median_r.push_back(a.median_r);
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<double> threshold_grid(int n_thresholds) {
  if (n_thresholds < 2) throw UsageError("need at least two thresholds");
  std::vector<double> g;
  for (int i = 0; i < n_thresholds; ++i) g.push_back(-1.0 + static_cast<double>(i) / (n_thresholds - 1));
  return g;
}

/// Evenly spaced alpha levels i/n for i = 1..n.
inline std::vector<double> alpha_grid(int n = 50) {
  std::vector<double> g;
  for (int i = 1; i <= n; ++i) g.push_back(static_cast<double>(i) / n);
  return g;
}

inline bool trajectory_flagged(const TrajectoryMedians& m, double delta_d, double delta_r) {
  for (std::size_t t = 0; t < m.median_d.size(); ++t)
    if (m.median_d[t] <= delta_d && m.median_r[t] <= delta_r) return true;
  return false;
}

/// TPR over negative-outcome and FPR over positive-outcome trajectories while
/// delta_d sweeps [-1, 0] with delta_r = 1 + delta_d. Timeouts are ignored.
inline std::vector<RocPoint> roc_sweep(const std::vector<TrajectoryMedians>& trajs, int n_thresholds = 100) {
  std::size_t n_neg = 0, n_pos = 0;
  for (const auto& m : trajs) {
    n_neg += m.outcome == Outcome::negative;
    n_pos += m.outcome == Outcome::positive;
  }
  if (n_neg == 0 || n_pos == 0) throw EvaluationError("ROC needs both negative and positive trajectories");
  std::vector<RocPoint> pts;
  for (double dd : threshold_grid(n_thresholds)) {
    const double dr = 1.0 + dd;
    std::size_t tp = 0, fp = 0;
    for (const auto& m : trajs) {
      if (m.outcome == Outcome::timeout || !trajectory_flagged(m, dd, dr)) continue;
      (m.outcome == Outcome::negative ? tp : fp) += 1;
    }
    pts.push_back({dd, dr, static_cast<double>(tp) / static_cast<double>(n_neg),
                   static_cast<double>(fp) / static_cast<double>(n_pos)});
  }
  return pts;
}

/// Trapezoidal area under (fpr, tpr) points with (0,0) and (1,1) anchors.
inline double auc(std::vector<RocPoint> pts) {
  if (pts.size() < 2) throw EvaluationError("AUC needs at least two ROC points");
  pts.push_back({0, 0, 0, 0});
  pts.push_back({0, 0, 1, 1});
  std::sort(pts.begin(), pts.end(),
            [](const RocPoint& a, const RocPoint& b) { return a.fpr != b.fpr ? a.fpr < b.fpr : a.tpr < b.tpr; });
  double area = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].fpr - pts[i - 1].fpr) * 0.5 * (pts[i].tpr + pts[i - 1].tpr);
  return area;
}

struct SweepReport {
  std::string method;
  double alpha = NAN;  // NAN for expectation methods
  double beta = 0;
  double data_fraction = 1.0;
  std::vector<RocPoint> roc;
  double auc = NAN;
  GapStats gaps;
  double missed_fraction = NAN;  // negative trajectories never flagged at the default thresholds
};

/// ROC report for one assessor at one alpha over held-out trajectories.
template <class T>
SweepReport roc_report(AssessmentCache<T>& cache, const std::vector<TrajectoryRecord>& trajs, double alpha,
                       double beta, double data_fraction, int n_thresholds = 100) {
  const auto& as = cache.assessor();
  SweepReport r;
  r.method = to_string(as.method);
  r.alpha = is_distributional(as.method) ? alpha : NAN;
  r.beta = beta;
  r.data_fraction = data_fraction;
  const auto med = trajectory_medians(cache, trajs, alpha);
  r.roc = roc_sweep(med, n_thresholds);
  r.auc = auc(r.roc);
  std::size_t neg = 0, missed = 0;
  for (const auto& m : med) {
    if (m.outcome != Outcome::negative) continue;
    ++neg;
    if (!trajectory_flagged(m, as.delta_d, as.delta_r)) ++missed;
  }
  r.missed_fraction = neg ? static_cast<double>(missed) / static_cast<double>(neg) : NAN;
  return r;
}

/// AUC at every alpha of the grid (a single entry for expectation methods).
template <class T>
std::vector<SweepReport> alpha_sweep(AssessmentCache<T>& cache, const std::vector<TrajectoryRecord>& trajs,
                                     const std::vector<double>& alphas, double beta, double data_fraction,
                                     int n_thresholds = 100) {
  std::vector<SweepReport> out;
  if (!is_distributional(cache.assessor().method)) {
    out.push_back(roc_report(cache, trajs, 1.0, beta, data_fraction, n_thresholds));
    return out;
  }
  for (double a : alphas) out.push_back(roc_report(cache, trajs, a, beta, data_fraction, n_thresholds));
  return out;
}

inline const SweepReport& best_by_auc(const std::vector<SweepReport>& reps) {
  if (reps.empty()) throw EvaluationError("no sweep reports");
  return *std::max_element(reps.begin(), reps.end(), [](const auto& a, const auto& b) { return a.auc < b.auc; });
}

inline double mean_auc(const std::vector<SweepReport>& reps) {
  double s = 0;
  for (const auto& r : reps) s += r.auc;
  return s / static_cast<double>(reps.size());
}

inline std::string csv_number(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream o;
  o.precision(10);
  o << v;
  return o.str();
}

inline std::string roc_csv(const std::vector<SweepReport>& reps) {
  std::ostringstream o;
  o << "method,alpha,beta,data_fraction,delta_d,delta_r,tpr,fpr\n";
  for (const auto& r : reps)
    for (const auto& p : r.roc)
      o << r.method << ',' << csv_number(r.alpha) << ',' << csv_number(r.beta) << ',' << csv_number(r.data_fraction)
        << ',' << csv_number(p.delta_d) << ',' << csv_number(p.delta_r) << ',' << csv_number(p.tpr) << ','
        << csv_number(p.fpr) << '\n';
  return o.str();
}

inline std::string auc_csv(const std::vector<SweepReport>& reps) {
  std::ostringstream o;
  o << "method,alpha,beta,data_fraction,auc,missed_fraction\n";
  for (const auto& r : reps)
    o << r.method << ',' << csv_number(r.alpha) << ',' << csv_number(r.beta) << ',' << csv_number(r.data_fraction)
      << ',' << csv_number(r.auc) << ',' << csv_number(r.missed_fraction) << '\n';
  return o.str();
}

// ---------------------------------------------------------------------------
// Training orchestration for the sweeps

template <class T>
struct HeadPair {
  ValueHead<T> d;
  ValueHead<T> r;
  TrainingLog d_log;
  TrainingLog r_log;
};

/// D- and R-heads for a method. The CQL penalty is enabled for the penalized
/// methods even at beta = 0, which must reproduce the unpenalized heads.
template <class T = float>
HeadPair<T> train_pair(const OfflineDataset& ds, Method method, TrainConfig cfg) {
  const bool cql = uses_cql(method);
  if (!cql) cfg.beta = 0;
  auto d = train<T>(ds, Mode::D, cfg, head_kind_for(method), cql);
  auto r = train<T>(ds, Mode::R, cfg, head_kind_for(method), cql);
  return {std::move(d.head), std::move(r.head), std::move(d.log), std::move(r.log)};
}

/// Memoizes trained pairs by (dataset label, method, config hash) so that
/// sweeps sharing a cell with the ablation grid do not retrain it.
template <class T = float>
class PairTrainer {
 public:
  const HeadPair<T>& get(const std::string& data_label, const OfflineDataset& ds, Method method, TrainConfig cfg) {
    if (!uses_cql(method)) cfg.beta = 0;
    const std::string key = data_label + "|" + to_string(method) + "|" + config_hash(cfg);
    auto it = pairs_.find(key);
    if (it == pairs_.end()) it = pairs_.emplace(key, train_pair<T>(ds, method, cfg)).first;
    return it->second;
  }
  std::size_t trained() const { return pairs_.size(); }

 private:
  std::map<std::string, HeadPair<T>> pairs_;
};

template <class T>
RiskAssessor<T> make_assessor(const HeadPair<T>& p, Method method, double alpha, std::uint64_t seed, int k_eval = 1000) {
  const auto th = Thresholds::defaults(method);
  RiskAssessor<T> as{p.d, p.r, method, alpha, th.delta_d, th.delta_r, k_eval, seed};
  as.validate();
  return as;
}

struct EvalSettings {
  std::vector<double> alphas = alpha_grid(50);
  int n_thresholds = 100;
  int k_eval = 1000;
  std::uint64_t assess_seed = 0;
};

struct AblationCell {
  Method method;
  HeadKind kind;
  bool cql;
  double max_auc;
  double best_alpha;  // NAN for expectation cells
  double mean_auc;    // mean over the alpha grid for distributional cells
  std::vector<SweepReport> reports;
};

template <class T = float>
std::vector<AblationCell> ablation_matrix(PairTrainer<T>& trainer, const OfflineDataset& ds, const TrainConfig& cfg,
                                          const std::vector<TrajectoryRecord>& eval_trajs, const EvalSettings& es) {
  std::vector<AblationCell> cells;
  for (Method m : {Method::ded, Method::ded_cql, Method::distded_no_cql, Method::distded}) {
    const auto& pair = trainer.get("full", ds, m, cfg);
    AssessmentCache<T> cache(make_assessor(pair, m, 0.1, es.assess_seed, es.k_eval));
    auto reps = alpha_sweep(cache, eval_trajs, es.alphas, uses_cql(m) ? cfg.beta : 0.0, 1.0, es.n_thresholds);
    const auto& best = best_by_auc(reps);
    cells.push_back({m, head_kind_for(m), uses_cql(m), best.auc, best.alpha,
                     is_distributional(m) ? mean_auc(reps) : best.auc, std::move(reps)});
  }
  return cells;
}

inline std::string ablation_csv(const std::vector<AblationCell>& cells) {
  std::ostringstream o;
  o << "method,kind,cql,max_auc,best_alpha,mean_auc_over_alpha\n";
  for (const auto& c : cells)
    o << to_string(c.method) << ',' << to_string(c.kind) << ',' << (c.cql ? 1 : 0) << ',' << csv_number(c.max_auc)
      << ',' << csv_number(c.best_alpha) << ',' << csv_number(c.mean_auc) << '\n';
  return o.str();
}

struct BetaSweepRow {
  double beta;
  std::vector<SweepReport> reports;  // one per alpha
  double best_alpha;
  double max_auc;
};

/// One DistDeD pair per beta (penalty enabled, so beta = 0 is the
/// penalty-path equivalent of the unpenalized cell).
template <class T = float>
std::vector<BetaSweepRow> beta_sweep(PairTrainer<T>& trainer, const OfflineDataset& ds, TrainConfig cfg,
                                     const std::vector<double>& betas, const std::vector<TrajectoryRecord>& eval_trajs,
                                     const EvalSettings& es) {
  if (betas.empty()) throw UsageError("beta sweep needs at least one beta");
  std::vector<BetaSweepRow> rows;
  for (double b : betas) {
    cfg.beta = b;
    const auto& pair = trainer.get("full", ds, Method::distded, cfg);
    AssessmentCache<T> cache(make_assessor(pair, Method::distded, 0.1, es.assess_seed, es.k_eval));
    auto reps = alpha_sweep(cache, eval_trajs, es.alphas, b, 1.0, es.n_thresholds);
    const auto& best = best_by_auc(reps);
    rows.push_back({b, reps, best.alpha, best.auc});
  }
  return rows;
}

inline std::string beta_sweep_csv(const std::vector<BetaSweepRow>& rows) {
  std::ostringstream o;
  o << "beta,alpha,auc,is_best_alpha\n";
  for (const auto& row : rows)
    for (const auto& r : row.reports)
      o << csv_number(row.beta) << ',' << csv_number(r.alpha) << ',' << csv_number(r.auc) << ','
        << (r.alpha == row.best_alpha ? 1 : 0) << '\n';
  return o.str();
}

struct FractionRow {
  double fraction;
  double ded_auc;
  double distded_max_auc;
  double distded_best_alpha;
};

template <class T = float>
std::vector<FractionRow> data_fraction_sweep(PairTrainer<T>& trainer, const OfflineDataset& ds, const TrainConfig& cfg,
                                             const std::vector<double>& fractions,
                                             const std::vector<TrajectoryRecord>& eval_trajs, const EvalSettings& es,
                                             std::uint64_t subsample_seed) {
  std::vector<FractionRow> rows;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    const double f = fractions[i];
    OfflineDataset sub;
    std::string label = "full";
    if (f < 1.0) {
      Rng rng(subsample_seed + i);
      sub = subsample(ds, f, rng);
      label = "fraction=" + csv_number(f);
    }
    const OfflineDataset& use = f < 1.0 ? sub : ds;
    FractionRow row{f, NAN, NAN, NAN};
    {
      AssessmentCache<T> cache(make_assessor(trainer.get(label, use, Method::ded, cfg), Method::ded, 1.0,
                                             es.assess_seed, es.k_eval));
      row.ded_auc = alpha_sweep(cache, eval_trajs, es.alphas, 0.0, f, es.n_thresholds).front().auc;
    }
    {
      AssessmentCache<T> cache(make_assessor(trainer.get(label, use, Method::distded, cfg), Method::distded, 0.1,
                                             es.assess_seed, es.k_eval));
      const auto reps = alpha_sweep(cache, eval_trajs, es.alphas, cfg.beta, f, es.n_thresholds);
      const auto& best = best_by_auc(reps);
      row.distded_max_auc = best.auc;
      row.distded_best_alpha = best.alpha;
    }
    rows.push_back(row);
  }
  return rows;
}

inline std::string fraction_csv(const std::vector<FractionRow>& rows) {
  std::ostringstream o;
  o << "data_fraction,ded_auc,distded_max_auc,distded_best_alpha\n";
  for (const auto& r : rows)
    o << csv_number(r.fraction) << ',' << csv_number(r.ded_auc) << ',' << csv_number(r.distded_max_auc) << ','
      << csv_number(r.distded_best_alpha) << '\n';
  return o.str();
}

// ---------------------------------------------------------------------------
// Threshold-selection histograms

struct HistogramBin {
  int time_bin;              // index into the time-to-termination edges
  Outcome outcome;
  Mode head;
  int value_bin;
  std::size_t count;
};

struct ThresholdHistograms {
  std::vector<int> time_edges;  // bin k holds steps-to-termination in [edges[k], edges[k+1])
  int value_bins = 20;
  std::vector<HistogramBin> bins;

  std::size_t mass(Outcome o, Mode head) const {
    std::size_t s = 0;
    for (const auto& b : bins)
      if (b.outcome == o && b.head == head) s += b.count;
    return s;
  }

  std::string csv() const {
    std::ostringstream o;
    o << "time_bin_lo,time_bin_hi,outcome,head,value_lo,value_hi,count\n";
    for (const auto& b : bins) {
      const Support s = support_for(b.head);
      const double w = (s.hi - s.lo) / value_bins;
      const std::string hi = static_cast<std::size_t>(b.time_bin + 1) < time_edges.size()
                                 ? std::to_string(time_edges[static_cast<std::size_t>(b.time_bin) + 1])
                                 : std::string("inf");
      o << time_edges[static_cast<std::size_t>(b.time_bin)] << ',' << hi << ',' << to_string(b.outcome) << ','
        << to_string(b.head) << ',' << csv_number(s.lo + w * b.value_bin) << ','
        << csv_number(s.lo + w * (b.value_bin + 1)) << ',' << b.count << '\n';
    }
    return o.str();
  }
};

/// Histograms of per-state median_d and median_r, split by trajectory outcome
/// and binned by steps remaining until termination (1 for the last state).
template <class T>
ThresholdHistograms threshold_histograms(AssessmentCache<T>& cache, const std::vector<TrajectoryRecord>& trajs,
                                         std::vector<int> time_edges, int value_bins = 20) {
  if (trajs.empty()) throw UsageError("threshold histograms need trajectories");
  if (time_edges.empty() || time_edges.front() > 1 || !std::is_sorted(time_edges.begin(), time_edges.end()))
    throw UsageError("time bin edges must be ascending and start at or below 1");
  ThresholdHistograms h;
  h.time_edges = time_edges;
  h.value_bins = value_bins;
  std::map<std::tuple<int, int, int, int>, std::size_t> counts;
  auto value_bin = [&](double v, Mode m) {
    const Support s = support_for(m);
    const int b = static_cast<int>(std::floor((v - s.lo) / (s.hi - s.lo) * value_bins));
    return std::clamp(b, 0, value_bins - 1);
  };
  for (const auto& tr : trajs) {
    const auto n = static_cast<int>(tr.transitions.size());
    for (int t = 0; t < n; ++t) {
      const int remaining = n - t;
      const int tb = static_cast<int>(std::upper_bound(time_edges.begin(), time_edges.end(), remaining) -
                                      time_edges.begin()) - 1;
      const auto a = cache.assess(tr.transitions[static_cast<std::size_t>(t)].state);
      counts[{tb, static_cast<int>(tr.outcome), 0, value_bin(a.median_d, Mode::D)}] += 1;
      counts[{tb, static_cast<int>(tr.outcome), 1, value_bin(a.median_r, Mode::R)}] += 1;
    }
  }
  for (const auto& [k, c] : counts)
    h.bins.push_back({std::get<0>(k), static_cast<Outcome>(std::get<1>(k)), std::get<2>(k) == 0 ? Mode::D : Mode::R,
                      std::get<3>(k), c});
  return h;
}

}  // namespace distded
