#pragma once

/**
 * Dead-end verdicts from a paired D-/R-head.
 *
 * An action is flagged when its D value is <= delta_d and its R value is
 * <= delta_r. A state is a dead-end when the medians over actions satisfy
 * the same pair of inequalities. Distributional methods replace each value
 * with CVaR_alpha of k_eval particles drawn at one shared set of taus per
 * state; expectation methods use the DDQN point estimate.
 *
 * The tau set for a state is seeded from the assessor seed and the state's
 * features, so a state's assessment does not depend on evaluation order.
 */

#include <algorithm>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "distded/risk.hpp"
#include "distded/value_learners.hpp"

namespace distded {

enum class Method { ded, ded_cql, distded, distded_no_cql };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::ded: return "ded";
    case Method::ded_cql: return "ded+cql";
    case Method::distded: return "distded";
    case Method::distded_no_cql: return "distded-cql";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  if (s == "ded") return Method::ded;
  if (s == "ded+cql" || s == "ded_cql") return Method::ded_cql;
  if (s == "distded") return Method::distded;
  if (s == "distded-cql" || s == "distded_no_cql") return Method::distded_no_cql;
  throw UsageError("unknown method '" + s + "'");
}

inline bool is_distributional(Method m) { return m == Method::distded || m == Method::distded_no_cql; }
inline bool uses_cql(Method m) { return m == Method::ded_cql || m == Method::distded; }
inline HeadKind head_kind_for(Method m) { return is_distributional(m) ? HeadKind::iqn : HeadKind::ddqn; }

/// The published defaults: delta_d = -0.15 / delta_r = 0.85 for DeD and
/// delta_d = -0.5 / delta_r = 0.5 with alpha = 0.1 for DistDeD.
struct Thresholds {
  double delta_d;
  double delta_r;
  static Thresholds defaults(Method m) { return is_distributional(m) ? Thresholds{-0.5, 0.5} : Thresholds{-0.15, 0.85}; }
};

template <class T = float>
struct RiskAssessor {
  ValueHead<T> d_head;
  ValueHead<T> r_head;
  Method method = Method::distded;
  double alpha = 0.1;
  double delta_d = -0.5;
  double delta_r = 0.5;
  int k_eval = 1000;
  std::uint64_t seed = 0;
  // Draw separate tau sets for the D and R heads instead of one shared set.
  bool independent_taus = false;

  void validate() const {
    const HeadKind need = head_kind_for(method);
    if (d_head.kind != need || r_head.kind != need)
      throw KindError(std::string("method ") + to_string(method) + " needs " + to_string(need) + " heads");
    if (d_head.mode != Mode::D || r_head.mode != Mode::R) throw ConfigError("assessor needs a D-head and an R-head");
    if (d_head.action_count() != r_head.action_count()) throw ConfigError("D and R heads disagree on action count");
    RiskLevel{alpha};
    if (!(delta_d >= -1 && delta_d <= 0) || !(delta_r >= 0 && delta_r <= 1))
      throw DomainError("thresholds must lie in their supports");
    if (k_eval < 1) throw ConfigError("k_eval must be positive");
  }

  RiskAssessor with_alpha(double a) const {
    RiskAssessor c = *this;
    c.alpha = a;
    return c;
  }
  RiskAssessor with_thresholds(double dd, double dr) const {
    RiskAssessor c = *this;
    c.delta_d = dd;
    c.delta_r = dr;
    return c;
  }
};

/// Per-action value samples at one state, each sorted ascending. Expectation
/// methods carry one sample (the point estimate) per action.
struct StateValues {
  std::vector<std::vector<double>> d;
  std::vector<std::vector<double>> r;
};

struct StateAssessment {
  std::vector<double> value_d;
  std::vector<double> value_r;
  std::vector<bool> avoid;
  double median_d = 0;
  double median_r = 0;
  bool is_dead_end = false;
  double alarm_score = 0;
};

inline bool flag_action(double value_d, double value_r, double delta_d, double delta_r) {
  return value_d <= delta_d && value_r <= delta_r;
}

/// Middle element, or the mean of the two middle elements for even counts.
inline double median(std::vector<double> v) {
  if (v.empty()) throw DomainError("median of an empty action list");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline bool is_dead_end(const std::vector<double>& per_action_d, const std::vector<double>& per_action_r,
                        double delta_d, double delta_r) {
  if (per_action_d.empty() || per_action_r.empty()) throw DomainError("empty action list");
  if (per_action_d.size() != per_action_r.size()) throw ShapeError("D and R action lists differ in length");
  return median(per_action_d) <= delta_d && median(per_action_r) <= delta_r;
}

inline double alarm_score(double median_d, double median_r) { return 0.5 * (median_d + (median_r - 1.0)); }

namespace detail {

inline std::uint64_t state_key(std::span<const double> state) {
  Fnv1a h;
  for (double x : state) h.update(&x, sizeof x);
  return h.value();
}

template <class T>
std::vector<std::vector<double>> sorted_particles(const ValueHead<T>& head, std::span<const double> state,
                                                  std::span<const double> taus) {
  const Mat<double> v = iqn_values(head, state, taus);  // K x A, clamped
  std::vector<std::vector<double>> out(static_cast<std::size_t>(v.cols()));
  for (Eigen::Index a = 0; a < v.cols(); ++a) {
    auto& p = out[static_cast<std::size_t>(a)];
    p.assign(v.col(a).data(), v.col(a).data() + v.rows());
    std::stable_sort(p.begin(), p.end());
  }
  return out;
}

inline std::vector<double> draw_taus(Rng& rng, int k) {
  std::vector<double> taus(static_cast<std::size_t>(k));
  for (double& t : taus) t = rng.uniform();
  return taus;
}

}  // namespace detail

template <class T>
StateValues evaluate_state(const RiskAssessor<T>& as, std::span<const double> state) {
  as.d_head.check_state(state);
  StateValues sv;
  if (!is_distributional(as.method)) {
    for (double v : ddqn_values(as.d_head, state)) sv.d.push_back({v});
    for (double v : ddqn_values(as.r_head, state)) sv.r.push_back({v});
    return sv;
  }
  Rng rng(derive_seed(as.seed, detail::state_key(state)));
  const auto taus_d = detail::draw_taus(rng, as.k_eval);
  sv.d = detail::sorted_particles(as.d_head, state, taus_d);
  if (as.independent_taus) {
    const auto taus_r = detail::draw_taus(rng, as.k_eval);
    sv.r = detail::sorted_particles(as.r_head, state, taus_r);
  } else {
    sv.r = detail::sorted_particles(as.r_head, state, taus_d);
  }
  return sv;
}

/// Mean of a sorted particle set, summed in the same order as cvar_sorted so
/// that alpha = 1 reproduces it bit for bit.
inline double sorted_mean(std::span<const double> sorted) { return cvar_sorted(sorted, RiskLevel{1.0}); }

inline StateAssessment assess_values(const StateValues& sv, double alpha, double delta_d, double delta_r) {
  const RiskLevel level{alpha};
  StateAssessment a;
  for (const auto& p : sv.d) a.value_d.push_back(cvar_sorted(p, level));
  for (const auto& p : sv.r) a.value_r.push_back(cvar_sorted(p, level));
  if (a.value_d.size() != a.value_r.size()) throw ShapeError("D and R action lists differ in length");
  for (std::size_t i = 0; i < a.value_d.size(); ++i)
    a.avoid.push_back(flag_action(a.value_d[i], a.value_r[i], delta_d, delta_r));
  a.median_d = median(a.value_d);
  a.median_r = median(a.value_r);
  a.is_dead_end = a.median_d <= delta_d && a.median_r <= delta_r;
  a.alarm_score = alarm_score(a.median_d, a.median_r);
  return a;
}

template <class T>
StateAssessment assess_state(const RiskAssessor<T>& as, std::span<const double> state) {
  as.validate();
  const double alpha = is_distributional(as.method) ? as.alpha : 1.0;
  return assess_values(evaluate_state(as, state), alpha, as.delta_d, as.delta_r);
}

/// Per-state cache of evaluated values; LifeGate revisits the same cells
/// constantly, so sweeps evaluate each distinct state once.
template <class T>
class AssessmentCache {
 public:
  explicit AssessmentCache(const RiskAssessor<T>& as) : as_(as) { as_.validate(); }

  const StateValues& values(std::span<const double> state) {
    std::vector<double> key(state.begin(), state.end());
    auto it = cache_.find(key);
    if (it == cache_.end()) it = cache_.emplace(std::move(key), evaluate_state(as_, state)).first;
    return it->second;
  }

  StateAssessment assess(std::span<const double> state, std::optional<double> alpha = std::nullopt) {
    const double a = is_distributional(as_.method) ? alpha.value_or(as_.alpha) : 1.0;
    return assess_values(values(state), a, as_.delta_d, as_.delta_r);
  }

  const RiskAssessor<T>& assessor() const { return as_; }

 private:
  RiskAssessor<T> as_;
  std::map<std::vector<double>, StateValues> cache_;
};

/// First step whose alarm score is <= delta_d.
inline std::optional<int> first_alarm(std::span<const double> scores, double delta_d) {
  for (std::size_t t = 0; t < scores.size(); ++t)
    if (scores[t] <= delta_d) return static_cast<int>(t);
  return std::nullopt;
}

template <class T>
std::optional<int> trajectory_alarm(AssessmentCache<T>& cache, const TrajectoryRecord& traj) {
  if (traj.transitions.empty()) throw DomainError("empty trajectory");
  std::vector<double> scores;
  for (const auto& t : traj.transitions) scores.push_back(cache.assess(t.state).alarm_score);
  return first_alarm(scores, cache.assessor().delta_d);
}

template <class T>
std::optional<int> trajectory_alarm(const RiskAssessor<T>& as, const TrajectoryRecord& traj) {
  AssessmentCache<T> cache(as);
  return trajectory_alarm(cache, traj);
}

struct SecurityGap {
  std::vector<double> d;  // mean - CVaR per action, D-head
  std::vector<double> r;  // same for the R-head
};

inline SecurityGap security_gap(const StateValues& sv, double alpha) {
  const RiskLevel level{alpha};
  SecurityGap g;
  for (const auto& p : sv.d) g.d.push_back(sorted_mean(p) - cvar_sorted(p, level));
  for (const auto& p : sv.r) g.r.push_back(sorted_mean(p) - cvar_sorted(p, level));
  return g;
}

/// mean(particles) - CVaR_alpha(particles) per action on the shared
/// particle set; never negative.
template <class T>
SecurityGap security_gap(const RiskAssessor<T>& as, std::span<const double> state) {
  as.validate();
  if (!is_distributional(as.method)) throw KindError("security gap needs a distributional method");
  return security_gap(evaluate_state(as, state), as.alpha);
}

}  // namespace distded
