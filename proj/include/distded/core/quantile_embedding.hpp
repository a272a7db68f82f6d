#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "distded/core/dense_net.hpp"

namespace distded {

/// Cosine embedding of a quantile level, projected to the hidden width:
///   phi(tau) = relu(W * [cos(pi * i * tau)]_{i=0..embed_dim-1} + b)
template <class T>
struct QuantileEmbedding {
  DenseNet<T> projection;  // single layer, embed_dim -> hidden

  int embed_dim() const { return projection.input_dim(); }
  int hidden_width() const { return projection.output_dim(); }

  static QuantileEmbedding zeros(int embed_dim, int hidden) {
    return {DenseNet<T>::zeros({embed_dim, hidden})};
  }
  static QuantileEmbedding he_uniform(int embed_dim, int hidden, Rng& rng) {
    return {DenseNet<T>::he_uniform({embed_dim, hidden}, rng)};
  }
};

inline void check_tau(double tau) {
  if (!(tau >= 0.0 && tau <= 1.0)) throw DomainError("quantile level outside [0, 1]");
}

/// Cosine features for a batch of taus, (embed_dim x n). Uses the Chebyshev
/// recurrence cos((i+1)t) = 2 cos(t) cos(i t) - cos((i-1)t).
template <class T>
Mat<T> cosine_features(std::span<const double> taus, int embed_dim) {
  Mat<T> f(embed_dim, static_cast<Eigen::Index>(taus.size()));
  for (std::size_t j = 0; j < taus.size(); ++j) {
    check_tau(taus[j]);
    const double c1 = std::cos(std::numbers::pi * taus[j]);
    double prev = 1.0;
    double cur = c1;
    const auto col = static_cast<Eigen::Index>(j);
    f(0, col) = T(1);
    if (embed_dim > 1) f(1, col) = static_cast<T>(c1);
    for (int i = 2; i < embed_dim; ++i) {
      const double next = 2.0 * c1 * cur - prev;
      prev = cur;
      cur = next;
      f(i, col) = static_cast<T>(next);
    }
  }
  return f;
}

/// Batched embedding with an optional tape for backpropagation.
template <class T>
Mat<T> embed_batch(const QuantileEmbedding<T>& emb, std::span<const double> taus, DenseTape<T>* tape = nullptr) {
  Mat<T> z = forward_batch(emb.projection, cosine_features<T>(taus, emb.embed_dim()), tape);
  z = z.cwiseMax(T(0));
  if (tape) tape->activations.back() = z;
  return z;
}

/// Gradients of the projection given dL/d(embedding). `tape` must come from
/// embed_batch; its stored output is post-rectifier so the mask is recoverable.
template <class T>
DenseGrads<T> embed_backward(const QuantileEmbedding<T>& emb, const DenseTape<T>& tape, const Mat<T>& upstream) {
  const Mat<T> masked = upstream.cwiseProduct((tape.activations.back().array() > T(0)).matrix().template cast<T>());
  return backward(emb.projection, tape, masked);
}

template <class T>
std::vector<T> quantile_embed(double tau, const QuantileEmbedding<T>& emb) {
  const double taus[1] = {tau};
  const Mat<T> out = embed_batch(emb, std::span<const double>(taus, 1));
  return std::vector<T>(out.data(), out.data() + out.size());
}

}  // namespace distded
