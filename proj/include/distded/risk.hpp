#pragma once

/**
 * Value-at-risk and conditional value-at-risk over uniformly weighted return
 * particles. Everything here is lower-tail: CVaR_alpha is the mean of the
 * ceil(alpha * K) smallest particles, VaR_alpha the largest of them.
 */

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "distded/errors.hpp"

namespace distded {

class RiskLevel {
 public:
  explicit RiskLevel(double alpha) : alpha_(alpha) {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw DomainError("risk level alpha must lie in (0, 1]");
  }
  double value() const { return alpha_; }

  /// Number of smallest particles covered at this level out of k.
  std::size_t tail_count(std::size_t k) const {
    auto m = static_cast<std::size_t>(std::ceil(alpha_ * static_cast<double>(k) - 1e-9));
    return std::clamp<std::size_t>(m, 1, k);
  }

 private:
  double alpha_;
};

struct EmpiricalReturnDistribution {
  std::vector<double> samples;
  double support_lo;
  double support_hi;

  /// Clamps every particle into [lo, hi].
  static EmpiricalReturnDistribution clamped(std::vector<double> samples, double lo, double hi) {
    if (!(lo <= hi)) throw DomainError("support bounds are inverted");
    for (double& s : samples) {
      if (!std::isfinite(s)) throw NumericError("non-finite return particle");
      s = std::clamp(s, lo, hi);
    }
    return {std::move(samples), lo, hi};
  }

  /// Unbounded support: no clamping.
  static EmpiricalReturnDistribution unbounded(std::vector<double> samples) {
    return clamped(std::move(samples), -HUGE_VAL, HUGE_VAL);
  }

  std::size_t size() const { return samples.size(); }
};

namespace detail {

inline std::vector<double> sorted_copy(const EmpiricalReturnDistribution& dist) {
  if (dist.samples.empty()) throw DomainError("empty return distribution");
  std::vector<double> s = dist.samples;
  std::stable_sort(s.begin(), s.end());
  return s;
}

}  // namespace detail

inline double var_alpha(const EmpiricalReturnDistribution& dist, RiskLevel alpha) {
  const auto s = detail::sorted_copy(dist);
  return s[alpha.tail_count(s.size()) - 1];
}

/// Mean of the alpha-tail of an already ascending-sorted particle set.
inline double cvar_sorted(std::span<const double> sorted, RiskLevel alpha) {
  if (sorted.empty()) throw DomainError("empty return distribution");
  const std::size_t m = alpha.tail_count(sorted.size());
  return std::accumulate(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(m), 0.0) /
         static_cast<double>(m);
}

inline double cvar_alpha(const EmpiricalReturnDistribution& dist, RiskLevel alpha) {
  const auto s = detail::sorted_copy(dist);
  return cvar_sorted(s, alpha);
}

inline double mean_value(const EmpiricalReturnDistribution& dist) {
  if (dist.samples.empty()) throw DomainError("empty return distribution");
  return std::accumulate(dist.samples.begin(), dist.samples.end(), 0.0) / static_cast<double>(dist.size());
}

/// CVaR at several levels from one shared sort, via prefix sums.
inline std::vector<double> cvar_spectrum(const EmpiricalReturnDistribution& dist, std::span<const RiskLevel> alphas) {
  if (alphas.empty()) throw DomainError("cvar spectrum needs at least one level");
  const auto s = detail::sorted_copy(dist);
  std::vector<double> prefix(s.size() + 1, 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) prefix[i + 1] = prefix[i] + s[i];
  std::vector<double> out;
  out.reserve(alphas.size());
  for (const auto& a : alphas) {
    const std::size_t m = a.tail_count(s.size());
    out.push_back(prefix[m] / static_cast<double>(m));
  }
  return out;
}

/**
 * Brute-force dual form: minimize sum_i xi_i z_i over the discrete risk
 * envelope {0 <= xi_i <= 1/m, sum xi_i = 1}, m = ceil(alpha K). The minimizer
 * is found greedily by repeated linear scans for the smallest unweighted
 * particle, never by sorting, so it shares no code path with cvar_alpha.
 * Intended for tests (O(K m)).
 */
inline double cvar_dual_oracle(const EmpiricalReturnDistribution& dist, RiskLevel alpha) {
  const std::size_t k = dist.size();
  if (k == 0) throw DomainError("empty return distribution");
  if (k > 10000) throw DomainError("dual oracle is limited to 10,000 particles");
  const std::size_t m = alpha.tail_count(k);
  const double cap = 1.0 / static_cast<double>(m);
  std::vector<double> xi(k, 0.0);
  std::vector<bool> used(k, false);
  double remaining = 1.0;
  for (std::size_t round = 0; round < m && remaining > 0.0; ++round) {
    std::size_t best = k;
    for (std::size_t i = 0; i < k; ++i)
      if (!used[i] && (best == k || dist.samples[i] < dist.samples[best])) best = i;
    used[best] = true;
    xi[best] = std::min(cap, remaining);
    remaining -= xi[best];
  }
  double objective = 0.0;
  for (std::size_t i = 0; i < k; ++i) objective += xi[i] * dist.samples[i];
  // Normalize away the rounding left in `remaining` after m capped weights.
  double total = 0.0;
  for (double w : xi) total += w;
  return objective / total;
}

}  // namespace distded
