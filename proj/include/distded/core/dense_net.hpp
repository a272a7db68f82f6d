#pragma once

/**
 * Dense feed-forward networks with explicit forward and backward passes.
 *
 * Samples are stored column-wise: a batch of B inputs is a (in x B) matrix.
 * Hidden layers use the rectifier, the output layer is the identity. The
 * rectifier's subgradient at exactly 0 is taken as 0.
 */

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "distded/core/random.hpp"
#include "distded/errors.hpp"

namespace distded {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <class T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <class T>
struct DenseNet {
  std::vector<int> layer_dims;
  std::vector<Mat<T>> weights;  // weights[l] is (dims[l+1] x dims[l])
  std::vector<Vec<T>> biases;

  int input_dim() const { return layer_dims.front(); }
  int output_dim() const { return layer_dims.back(); }
  std::size_t layer_count() const { return weights.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  /// Zero weights and biases with the given layer shape.
  static DenseNet zeros(std::vector<int> dims) {
    check_dims(dims);
    DenseNet net;
    net.layer_dims = std::move(dims);
    for (std::size_t l = 0; l + 1 < net.layer_dims.size(); ++l) {
      net.weights.push_back(Mat<T>::Zero(net.layer_dims[l + 1], net.layer_dims[l]));
      net.biases.push_back(Vec<T>::Zero(net.layer_dims[l + 1]));
    }
    return net;
  }

  /// He-uniform fan-in initialization, zero biases.
  static DenseNet he_uniform(std::vector<int> dims, Rng& rng) {
    DenseNet net = zeros(std::move(dims));
    for (auto& w : net.weights) {
      const double limit = std::sqrt(6.0 / static_cast<double>(w.cols()));
      // Row-major fill order so the draw sequence matches the checkpoint layout.
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = static_cast<T>(rng.uniform(-limit, limit));
    }
    return net;
  }

  template <class U>
  DenseNet<U> cast() const {
    DenseNet<U> out;
    out.layer_dims = layer_dims;
    for (const auto& w : weights) out.weights.push_back(w.template cast<U>());
    for (const auto& b : biases) out.biases.push_back(b.template cast<U>());
    return out;
  }

  void validate() const {
    check_dims(layer_dims);
    if (weights.size() + 1 != layer_dims.size() || biases.size() != weights.size())
      throw ShapeError("layer count does not match layer_dims");
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != layer_dims[l + 1] || weights[l].cols() != layer_dims[l] ||
          biases[l].size() != layer_dims[l + 1])
        throw ShapeError("parameter shape does not chain with layer_dims at layer " + std::to_string(l));
    }
  }

  bool same_shape(const DenseNet& other) const { return layer_dims == other.layer_dims; }

 private:
  static void check_dims(const std::vector<int>& dims) {
    if (dims.size() < 2) throw ShapeError("a dense net needs at least input and output dims");
    for (int d : dims)
      if (d <= 0) throw ShapeError("layer dims must be positive");
  }
};

/// Post-activation values of every layer, recorded for backward().
template <class T>
struct DenseTape {
  std::vector<Mat<T>> activations;  // activations[0] is the input batch
};

template <class T>
struct DenseGrads {
  std::vector<Mat<T>> weights;
  std::vector<Vec<T>> biases;
  Mat<T> input;  // gradient with respect to the input batch

  static DenseGrads zeros_like(const DenseNet<T>& net) {
    DenseGrads g;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      g.weights.push_back(Mat<T>::Zero(net.weights[l].rows(), net.weights[l].cols()));
      g.biases.push_back(Vec<T>::Zero(net.biases[l].size()));
    }
    return g;
  }

  DenseGrads& operator+=(const DenseGrads& o) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      weights[l] += o.weights[l];
      biases[l] += o.biases[l];
    }
    return *this;
  }
};

template <class T>
Mat<T> forward_batch(const DenseNet<T>& net, const std::type_identity_t<Mat<T>>& x, DenseTape<T>* tape = nullptr) {
  if (x.rows() != net.input_dim())
    throw ShapeError("input has " + std::to_string(x.rows()) + " rows, net expects " +
                     std::to_string(net.input_dim()));
  if (tape) {
    tape->activations.clear();
    tape->activations.push_back(x);
  }
  Mat<T> a = x;
  const std::size_t n_layers = net.layer_count();
  for (std::size_t l = 0; l < n_layers; ++l) {
    Mat<T> z = net.weights[l] * a;
    z.colwise() += net.biases[l];
    if (l + 1 < n_layers) z = z.cwiseMax(T(0));
    a = std::move(z);
    if (tape) tape->activations.push_back(a);
  }
  return a;
}

template <class T>
std::vector<T> forward(const DenseNet<T>& net, std::span<const T> x) {
  if (static_cast<int>(x.size()) != net.input_dim())
    throw ShapeError("input length " + std::to_string(x.size()) + " does not match net input " +
                     std::to_string(net.input_dim()));
  Mat<T> col(net.input_dim(), 1);
  for (std::size_t i = 0; i < x.size(); ++i) col(static_cast<Eigen::Index>(i), 0) = x[i];
  const Mat<T> out = forward_batch(net, col);
  return std::vector<T>(out.data(), out.data() + out.size());
}

/// Chain rule through a recorded forward pass. `upstream` is dL/d(output),
/// shaped like the forward output.
template <class T>
DenseGrads<T> backward(const DenseNet<T>& net, const DenseTape<T>& tape, const std::type_identity_t<Mat<T>>& upstream) {
  const std::size_t n_layers = net.layer_count();
  if (tape.activations.size() != n_layers + 1) throw ShapeError("tape does not belong to this net");
  if (upstream.rows() != net.output_dim() || upstream.cols() != tape.activations.back().cols())
    throw ShapeError("upstream gradient shape does not match the forward output");
  if (!upstream.allFinite()) throw NumericError("non-finite upstream gradient");

  DenseGrads<T> g;
  g.weights.resize(n_layers);
  g.biases.resize(n_layers);
  Mat<T> delta = upstream;
  for (std::size_t l = n_layers; l-- > 0;) {
    const Mat<T>& a_in = tape.activations[l];
    g.weights[l] = delta * a_in.transpose();
    g.biases[l] = delta.rowwise().sum();
    Mat<T> back = net.weights[l].transpose() * delta;
    if (l > 0) back = back.cwiseProduct((a_in.array() > T(0)).matrix().template cast<T>());
    delta = std::move(back);
  }
  g.input = std::move(delta);
  return g;
}

/// Parameter spans in checkpoint order: per layer, weights then biases.
/// Eigen stores column-major; the span order is the storage order.
template <class T>
std::vector<std::span<T>> parameter_spans(DenseNet<T>& net) {
  std::vector<std::span<T>> out;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    out.emplace_back(net.weights[l].data(), static_cast<std::size_t>(net.weights[l].size()));
    out.emplace_back(net.biases[l].data(), static_cast<std::size_t>(net.biases[l].size()));
  }
  return out;
}

template <class T>
std::vector<std::span<const T>> gradient_spans(const DenseGrads<T>& g) {
  std::vector<std::span<const T>> out;
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    out.emplace_back(g.weights[l].data(), static_cast<std::size_t>(g.weights[l].size()));
    out.emplace_back(g.biases[l].data(), static_cast<std::size_t>(g.biases[l].size()));
  }
  return out;
}

}  // namespace distded
