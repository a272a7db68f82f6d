#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "distded/errors.hpp"

namespace distded {

template <class T>
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;

  AdamState() = default;
  AdamState(double lr_, double b1 = 0.9, double b2 = 0.999, double eps_ = 1e-8)
      : lr(lr_), beta1(b1), beta2(b2), eps(eps_) {}
};

/// One bias-corrected Adam update. Moments are allocated (zeroed) on the
/// first call and must keep the same shapes afterwards.
template <class T>
void adam_step(const std::vector<std::span<T>>& params, const std::vector<std::span<const T>>& grads,
               AdamState<T>& state) {
  if (!(state.lr > 0)) throw ConfigError("adam learning rate must be positive");
  if (params.size() != grads.size()) throw ShapeError("adam: parameter/gradient group count differs");
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.size(), T(0));
      state.second_moment.emplace_back(p.size(), T(0));
    }
  }
  if (state.first_moment.size() != params.size()) throw ShapeError("adam: state shape differs from parameters");
  for (std::size_t k = 0; k < params.size(); ++k)
    if (params[k].size() != grads[k].size() || state.first_moment[k].size() != params[k].size())
      throw ShapeError("adam: tensor size mismatch in group " + std::to_string(k));

  state.step_count += 1;
  const T b1 = static_cast<T>(state.beta1);
  const T b2 = static_cast<T>(state.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(state.beta1, static_cast<double>(state.step_count)));
  const T bc2 = static_cast<T>(1.0 - std::pow(state.beta2, static_cast<double>(state.step_count)));
  const T lr = static_cast<T>(state.lr);
  const T eps = static_cast<T>(state.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    const auto& g = grads[k];
    auto& p = params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T m_hat = m[i] / bc1;
      const T v_hat = v[i] / bc2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

}  // namespace distded
