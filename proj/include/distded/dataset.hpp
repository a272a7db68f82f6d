#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "distded/core/checkpoint.hpp"
#include "distded/core/hash.hpp"
#include "distded/lifegate.hpp"

namespace distded {

/// Which relabeled MDP a reward or head belongs to: D (negative outcomes,
/// rewards in {-1, 0}) or R (positive outcomes, rewards in {0, +1}).
enum class Mode { D, R };

inline const char* to_string(Mode m) { return m == Mode::D ? "D" : "R"; }

inline double relabel(const Transition& t, Mode mode) {
  if (!t.terminal) return 0.0;
  if (mode == Mode::D) return t.outcome == Outcome::negative ? -1.0 : 0.0;
  return t.outcome == Outcome::positive ? 1.0 : 0.0;
}

struct Support {
  double lo;
  double hi;
  double clamp(double v) const { return std::clamp(v, lo, hi); }
};

inline Support support_for(Mode mode) { return mode == Mode::D ? Support{-1.0, 0.0} : Support{0.0, 1.0}; }

struct TransitionRef {
  std::uint32_t trajectory;
  std::uint32_t step;
};

struct DatasetMetadata {
  std::string env_hash;
  std::uint64_t seed = 0;
  std::size_t size = 0;  // transition count
};

class OfflineDataset {
 public:
  OfflineDataset() = default;
  OfflineDataset(std::vector<TrajectoryRecord> trajectories, DatasetMetadata meta)
      : trajectories_(std::move(trajectories)), meta_(std::move(meta)) {
    reindex();
  }

  const std::vector<TrajectoryRecord>& trajectories() const { return trajectories_; }
  const DatasetMetadata& metadata() const { return meta_; }
  std::size_t size() const { return all_.size(); }
  bool empty() const { return all_.empty(); }

  const Transition& at(TransitionRef r) const { return trajectories_[r.trajectory].transitions[r.step]; }
  const std::vector<TransitionRef>& all() const { return all_; }
  const std::vector<TransitionRef>& negative_terminals() const { return negative_; }
  const std::vector<TransitionRef>& positive_terminals() const { return positive_; }

  std::size_t count_outcome(Outcome o) const {
    return static_cast<std::size_t>(
        std::count_if(trajectories_.begin(), trajectories_.end(), [o](const auto& t) { return t.outcome == o; }));
  }

 private:
  void reindex() {
    all_.clear();
    negative_.clear();
    positive_.clear();
    for (std::uint32_t i = 0; i < trajectories_.size(); ++i) {
      const auto& tr = trajectories_[i].transitions;
      for (std::uint32_t j = 0; j < tr.size(); ++j) {
        all_.push_back({i, j});
        if (tr[j].terminal && tr[j].outcome == Outcome::negative) negative_.push_back({i, j});
        if (tr[j].terminal && tr[j].outcome == Outcome::positive) positive_.push_back({i, j});
      }
    }
    meta_.size = all_.size();
  }

  std::vector<TrajectoryRecord> trajectories_;
  DatasetMetadata meta_;
  std::vector<TransitionRef> all_;
  std::vector<TransitionRef> negative_;
  std::vector<TransitionRef> positive_;
};

/// Uniform-random behaviour from uniformly random starts over every
/// non-terminal cell; the last episode is always completed, so the result
/// may exceed n_transitions.
inline OfflineDataset collect_random(const LifeGate& env, std::size_t n_transitions, std::uint64_t seed) {
  if (n_transitions < 1) throw UsageError("collect_random needs n >= 1");
  Rng rng(seed);
  FixedPolicy uniform{"uniform", std::vector<Action>(env.spec().width * env.spec().height, Action::stay), 1.0};
  std::vector<TrajectoryRecord> trajs;
  std::size_t total = 0;
  while (total < n_transitions) {
    const EnvState start = env.reset_anywhere(rng);
    trajs.push_back(rollout(env, uniform, rng, start));
    total += trajs.back().size();
  }
  return OfflineDataset(std::move(trajs), {spec_hash(env.spec()), seed, total});
}

/// ceil(frac * batch) draws from the negative-terminal index, the rest
/// uniformly over all transitions, then shuffled.
inline std::vector<const Transition*> stratified_minibatch(const OfflineDataset& ds, std::size_t batch_size,
                                                           double neg_terminal_frac, Rng& rng) {
  if (batch_size < 1) throw UsageError("batch size must be at least 1");
  if (!(neg_terminal_frac >= 0.0 && neg_terminal_frac < 1.0))
    throw UsageError("negative-terminal fraction must lie in [0, 1)");
  if (ds.empty()) throw SamplingError("cannot sample from an empty dataset");
  const auto n_neg = static_cast<std::size_t>(std::ceil(neg_terminal_frac * static_cast<double>(batch_size) - 1e-9));
  if (n_neg > 0 && ds.negative_terminals().empty())
    throw SamplingError("negative-terminal stratum requested but the dataset has none");
  std::vector<const Transition*> batch;
  batch.reserve(batch_size);
  const auto& neg = ds.negative_terminals();
  const auto& all = ds.all();
  for (std::size_t i = 0; i < n_neg; ++i) batch.push_back(&ds.at(neg[rng.below(neg.size())]));
  for (std::size_t i = n_neg; i < batch_size; ++i) batch.push_back(&ds.at(all[rng.below(all.size())]));
  rng.shuffle(batch.begin(), batch.end());
  return batch;
}

/// Trajectory-level subsample that keeps round(fraction * count) trajectories
/// of each outcome class, preserving stored order.
inline OfflineDataset subsample(const OfflineDataset& ds, double fraction, Rng& rng) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw UsageError("subsample fraction must lie in (0, 1]");
  std::vector<std::uint32_t> by_class[3];
  for (std::uint32_t i = 0; i < ds.trajectories().size(); ++i)
    by_class[static_cast<int>(ds.trajectories()[i].outcome)].push_back(i);
  std::vector<std::uint32_t> keep;
  for (int c = 0; c < 3; ++c) {
    auto& idx = by_class[c];
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
    if (c != static_cast<int>(Outcome::timeout) && k == 0)
      throw SamplingError(std::string("subsample leaves no ") + to_string(static_cast<Outcome>(c)) + " trajectories");
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
    keep.insert(keep.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(keep.begin(), keep.end());
  std::vector<TrajectoryRecord> out;
  out.reserve(keep.size());
  for (auto i : keep) out.push_back(ds.trajectories()[i]);
  return OfflineDataset(std::move(out), ds.metadata());
}

// ---------------------------------------------------------------------------
// On-disk format: JSON lines. The first line is a header; each trajectory is
// a summary line followed by one line per transition. The header carries an
// FNV-1a hash of every byte after it.

inline constexpr int kDatasetFormatVersion = 1;

inline std::string serialize(const OfflineDataset& ds) {
  std::ostringstream body;
  for (std::size_t i = 0; i < ds.trajectories().size(); ++i) {
    const auto& tr = ds.trajectories()[i];
    nlohmann::ordered_json head{{"trajectory", i},
                                {"outcome", to_string(tr.outcome)},
                                {"zone_entry", tr.zone_entry_index ? nlohmann::ordered_json(*tr.zone_entry_index)
                                                                   : nlohmann::ordered_json(nullptr)},
                                {"length", tr.size()}};
    body << head.dump() << '\n';
    for (const auto& t : tr.transitions) {
      nlohmann::ordered_json line{{"s", t.state},
                                  {"a", t.action},
                                  {"s2", t.next_state},
                                  {"terminal", t.terminal},
                                  {"outcome", t.outcome ? nlohmann::ordered_json(to_string(*t.outcome))
                                                        : nlohmann::ordered_json(nullptr)}};
      body << line.dump() << '\n';
    }
  }
  const std::string payload = body.str();
  nlohmann::ordered_json header{{"format", "distded-dataset"},
                                {"version", kDatasetFormatVersion},
                                {"env_hash", ds.metadata().env_hash},
                                {"seed", ds.metadata().seed},
                                {"size", ds.size()},
                                {"trajectories", ds.trajectories().size()},
                                {"content_hash", content_hash(payload)}};
  return header.dump() + '\n' + payload;
}

inline OfflineDataset deserialize(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw FormatError("dataset file has no header line");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dataset header is not JSON: ") + e.what());
  }
  const std::string payload = bytes.substr(nl + 1);
  try {
    if (header.at("format") != "distded-dataset" || header.at("version") != kDatasetFormatVersion)
      throw FormatError("unsupported dataset format or version");
    if (header.at("content_hash").get<std::string>() != content_hash(payload))
      throw FormatError("dataset content hash mismatch (corrupt or truncated file)");

    std::istringstream in(payload);
    std::string line;
    std::vector<TrajectoryRecord> trajs;
    const auto n_traj = header.at("trajectories").get<std::size_t>();
    for (std::size_t i = 0; i < n_traj; ++i) {
      if (!std::getline(in, line)) throw FormatError("dataset ends before all trajectories");
      const auto head = nlohmann::json::parse(line);
      TrajectoryRecord tr;
      tr.outcome = outcome_from_string(head.at("outcome").get<std::string>());
      if (!head.at("zone_entry").is_null()) tr.zone_entry_index = head.at("zone_entry").get<int>();
      const auto len = head.at("length").get<std::size_t>();
      for (std::size_t k = 0; k < len; ++k) {
        if (!std::getline(in, line)) throw FormatError("dataset ends inside a trajectory");
        const auto j = nlohmann::json::parse(line);
        Transition t;
        t.state = j.at("s").get<std::vector<double>>();
        t.action = j.at("a").get<int>();
        t.next_state = j.at("s2").get<std::vector<double>>();
        t.terminal = j.at("terminal").get<bool>();
        if (!j.at("outcome").is_null()) t.outcome = outcome_from_string(j.at("outcome").get<std::string>());
        tr.transitions.push_back(std::move(t));
      }
      validate(tr, kActionCount);
      trajs.push_back(std::move(tr));
    }
    if (std::getline(in, line) && !line.empty()) throw FormatError("trailing data after the last trajectory");
    OfflineDataset ds(std::move(trajs),
                      {header.at("env_hash").get<std::string>(), header.at("seed").get<std::uint64_t>(), 0});
    if (ds.size() != header.at("size").get<std::size_t>()) throw FormatError("transition count differs from header");
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed dataset: ") + e.what());
  } catch (const DomainError& e) {
    throw FormatError(std::string("invalid dataset contents: ") + e.what());
  }
}

inline void save(const OfflineDataset& ds, const std::string& path) { write_file(path, serialize(ds)); }
inline OfflineDataset load_dataset(const std::string& path) { return deserialize(read_file(path)); }

inline std::string dataset_hash(const OfflineDataset& ds) { return content_hash(serialize(ds)); }

}  // namespace distded
