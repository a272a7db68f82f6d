#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "distded/core/adam.hpp"
#include "distded/core/dense_net.hpp"
#include "distded/core/quantile_embedding.hpp"
#include "fd_oracle.hpp"

using namespace distded;

TEST(DenseNet, ZeroWeightsReturnOutputBias) {
  auto net = DenseNet<double>::zeros({3, 4, 2});
  net.biases.back() << 0.25, -1.5;
  const std::vector<double> x{0.3, -2.0, 7.0};
  const auto y = forward(net, std::span<const double>(x));
  ASSERT_EQ(y.size(), 2u);
  EXPECT_EQ(y[0], 0.25);
  EXPECT_EQ(y[1], -1.5);
}

TEST(DenseNet, IdentityLayer) {
  auto net = DenseNet<double>::zeros({2, 2});
  net.weights[0].setIdentity();
  const std::vector<double> x{0.3, -0.7};
  const auto y = forward(net, std::span<const double>(x));
  EXPECT_EQ(y[0], 0.3);
  EXPECT_EQ(y[1], -0.7);
}

TEST(DenseNet, MatchesHandRolledMultiply) {
  Rng rng(11);
  auto net = DenseNet<double>::he_uniform({2, 3, 1}, rng);
  for (auto& b : net.biases) b.setRandom();
  const std::vector<double> x{0.4, -0.9};
  const double expected = testing_oracle::mlp_forward(net.layer_dims, testing_oracle::flat_params(net), x)[0];
  EXPECT_NEAR(forward(net, std::span<const double>(x))[0], expected, 1e-14);
}

TEST(DenseNet, RejectsWrongInputLength) {
  auto net = DenseNet<double>::zeros({3, 2});
  const std::vector<double> x{1.0, 2.0};
  EXPECT_THROW(forward(net, std::span<const double>(x)), ShapeError);
  EXPECT_THROW(forward_batch(net, Mat<double>::Zero(2, 5)), ShapeError);
}

TEST(DenseNet, RejectsInconsistentShapes) {
  auto net = DenseNet<double>::zeros({3, 4, 2});
  net.weights[1] = Mat<double>::Zero(2, 3);
  EXPECT_THROW(net.validate(), ShapeError);
  EXPECT_THROW(DenseNet<double>::zeros({3}), ShapeError);
  EXPECT_THROW(DenseNet<double>::zeros({3, 0, 1}), ShapeError);
}

TEST(DenseNet, ZeroUpstreamGivesZeroGradients) {
  Rng rng(3);
  auto net = DenseNet<double>::he_uniform({2, 5, 3}, rng);
  DenseTape<double> tape;
  Mat<double> x = Mat<double>::Random(2, 4);
  forward_batch(net, x, &tape);
  const auto g = backward(net, tape, Mat<double>::Zero(3, 4));
  for (const auto& w : g.weights) EXPECT_EQ(w.cwiseAbs().maxCoeff(), 0.0);
  for (const auto& b : g.biases) EXPECT_EQ(b.cwiseAbs().maxCoeff(), 0.0);
}

TEST(DenseNet, LinearScalarGradient) {
  auto net = DenseNet<double>::zeros({1, 1});
  net.weights[0](0, 0) = 0.7;
  DenseTape<double> tape;
  forward_batch(net, Mat<double>::Constant(1, 1, 2.0), &tape);
  const auto g = backward(net, tape, Mat<double>::Constant(1, 1, 1.0));
  EXPECT_EQ(g.weights[0](0, 0), 2.0);
  EXPECT_EQ(g.biases[0](0), 1.0);
}

TEST(DenseNet, NonFiniteUpstreamRejected) {
  auto net = DenseNet<double>::zeros({1, 1});
  DenseTape<double> tape;
  forward_batch(net, Mat<double>::Constant(1, 1, 2.0), &tape);
  EXPECT_THROW(backward(net, tape, Mat<double>::Constant(1, 1, NAN)), NumericError);
}

TEST(DenseNet, BackwardMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    auto net = DenseNet<double>::he_uniform({2, 6, 5, 3}, rng);
    for (auto& b : net.biases)
      for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = rng.uniform(-0.3, 0.3);
    Mat<double> x(2, 4), c(3, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1, 1);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = rng.uniform(-1, 1);
    DenseTape<double> tape;
    forward_batch(net, x, &tape);
    const auto g = backward(net, tape, c);
    auto loss = [&] { return forward_batch(net, x).cwiseProduct(c).sum(); };
    auto params = parameter_spans(net);
    auto grads = gradient_spans(g);
    for (std::size_t k = 0; k < params.size(); ++k)
      for (std::size_t i = 0; i < params[k].size(); ++i) {
        const double fd = testing_oracle::central_difference(params[k][i], loss);
        EXPECT_TRUE(testing_oracle::grad_close(grads[k][i], fd)) << "seed " << seed << " group " << k << " i " << i
                                                                 << ": analytic " << grads[k][i] << " fd " << fd;
      }
  }
}

TEST(DenseNet, SeededInitIsReproducible) {
  Rng a(42), b(42);
  const auto n1 = DenseNet<float>::he_uniform({2, 32, 32, 5}, a);
  const auto n2 = DenseNet<float>::he_uniform({2, 32, 32, 5}, b);
  for (std::size_t l = 0; l < n1.layer_count(); ++l) EXPECT_TRUE(n1.weights[l] == n2.weights[l]);
}

namespace {

// Scripted Adam, written out longhand for a single scalar.
struct ScalarAdam {
  double m = 0, v = 0, p;
  int t = 0;
  double step(double g, double lr, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    t += 1;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    p -= lr * mh / (std::sqrt(vh) + eps);
    return p;
  }
};

}  // namespace

TEST(Adam, ZeroGradientIsFixedPoint) {
  std::vector<double> p{1.0, -2.0, 3.5};
  const std::vector<double> g(3, 0.0);
  AdamState<double> st(0.1);
  adam_step<double>({std::span<double>(p)}, {std::span<const double>(g)}, st);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.5}));
  EXPECT_EQ(st.step_count, 1u);
}

TEST(Adam, MatchesScriptedOracleBitwise) {
  std::vector<double> p{0.5};
  const std::vector<double> g{1.0};
  AdamState<double> st(0.1);
  ScalarAdam oracle{.p = 0.5};
  adam_step<double>({std::span<double>(p)}, {std::span<const double>(g)}, st);
  EXPECT_EQ(p[0], oracle.step(1.0, 0.1));
  EXPECT_NEAR(p[0], 0.4, 1e-8);
  adam_step<double>({std::span<double>(p)}, {std::span<const double>(g)}, st);
  EXPECT_EQ(p[0], oracle.step(1.0, 0.1));
  EXPECT_EQ(st.step_count, 2u);
}

TEST(Adam, ShapeMismatchRejected) {
  std::vector<double> p{1.0, 2.0};
  const std::vector<double> g{1.0};
  AdamState<double> st(0.1);
  EXPECT_THROW(adam_step<double>({std::span<double>(p)}, {std::span<const double>(g)}, st), ShapeError);
  AdamState<double> bad(0.0);
  const std::vector<double> g2{1.0, 1.0};
  EXPECT_THROW(adam_step<double>({std::span<double>(p)}, {std::span<const double>(g2)}, bad), ConfigError);
}

TEST(QuantileEmbedding, ZeroProjectionGivesRectifiedBias) {
  auto emb = QuantileEmbedding<double>::zeros(64, 4);
  emb.projection.biases[0] << 0.5, -0.25, 0.0, 2.0;
  const auto v = quantile_embed(0.0, emb);
  EXPECT_EQ(v, (std::vector<double>{0.5, 0.0, 0.0, 2.0}));
}

TEST(QuantileEmbedding, CosineFeatures) {
  const double zero[1] = {0.0};
  const auto f0 = cosine_features<double>(std::span<const double>(zero, 1), 64);
  for (int i = 0; i < 64; ++i) EXPECT_EQ(f0(i, 0), 1.0);

  const double half[1] = {0.5};
  const auto f = cosine_features<double>(std::span<const double>(half, 1), 4);
  const double expected[4] = {1.0, 0.0, -1.0, 0.0};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(f(i, 0), expected[i], 1e-12);

  // Recurrence against direct evaluation across the range.
  const double taus[3] = {0.013, 0.37, 0.999};
  const auto g = cosine_features<double>(std::span<const double>(taus, 3), 64);
  for (int j = 0; j < 3; ++j)
    for (int i = 0; i < 64; ++i) EXPECT_NEAR(g(i, j), std::cos(std::numbers::pi * i * taus[j]), 1e-12);
}

TEST(QuantileEmbedding, RejectsTauOutsideUnitInterval) {
  auto emb = QuantileEmbedding<double>::zeros(8, 4);
  EXPECT_THROW(quantile_embed(1.5, emb), DomainError);
  EXPECT_THROW(quantile_embed(-0.1, emb), DomainError);
}

TEST(QuantileEmbedding, OutputFiniteAndSized) {
  Rng rng(5);
  auto emb = QuantileEmbedding<double>::he_uniform(64, 32, rng);
  for (double tau : {0.0, 0.25, 0.5, 1.0}) {
    const auto v = quantile_embed(tau, emb);
    ASSERT_EQ(v.size(), 32u);
    for (double x : v) EXPECT_TRUE(std::isfinite(x) && x >= 0.0);
  }
}
