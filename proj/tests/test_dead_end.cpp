#include <gtest/gtest.h>

#include "distded/dead_end.hpp"
#include "synthetic.hpp"

using namespace distded;

namespace {

// A head whose every output is `c`.
ValueHead<float> constant_head(HeadKind kind, Mode mode, float c, std::uint64_t seed = 1) {
  Rng rng(seed);
  auto h = ValueHead<float>::make(kind, mode, 2, kActionCount, 8, 8, rng);
  zero_output_layer(h);
  h.online.output_net().biases.back().setConstant(c);
  h.target = h.online;
  return h;
}

RiskAssessor<float> constant_assessor(Method m, float d, float r) {
  const HeadKind k = head_kind_for(m);
  const auto th = Thresholds::defaults(m);
  return {constant_head(k, Mode::D, d), constant_head(k, Mode::R, r), m, 0.1, th.delta_d, th.delta_r, 200, 0};
}

RiskAssessor<float> random_assessor(std::uint64_t seed, int k_eval = 300) {
  Rng rng(seed);
  auto d = ValueHead<float>::make(HeadKind::iqn, Mode::D, 2, kActionCount, 16, 16, rng);
  auto r = ValueHead<float>::make(HeadKind::iqn, Mode::R, 2, kActionCount, 16, 16, rng);
  // Shift into the supports so clamping does not flatten everything.
  d.online.head.biases.back().array() -= 0.5f;
  r.online.head.biases.back().array() += 0.5f;
  return {d, r, Method::distded, 0.1, -0.5, 0.5, k_eval, seed};
}

}  // namespace

TEST(FlagAction, Rule) {
  EXPECT_TRUE(flag_action(-0.8, 0.1, -0.5, 0.5));
  EXPECT_FALSE(flag_action(-0.8, 0.9, -0.5, 0.5));
  EXPECT_TRUE(flag_action(-0.5, 0.5, -0.5, 0.5));
  EXPECT_FALSE(flag_action(-0.4, 0.1, -0.5, 0.5));
}

TEST(IsDeadEnd, MedianRule) {
  const std::vector<double> d{-0.9, -0.8, -0.6, -0.1, 0.0};
  EXPECT_EQ(median(d), -0.6);
  EXPECT_TRUE(is_dead_end(d, std::vector<double>(5, 0.1), -0.5, 0.5));
  EXPECT_FALSE(is_dead_end(std::vector<double>(5, 0.0), std::vector<double>(5, 0.0), -0.5, 0.5));
  EXPECT_DOUBLE_EQ(median({-1, -0.6, -0.4, 0}), -0.5);
  EXPECT_THROW(is_dead_end({}, {}, -0.5, 0.5), DomainError);
  EXPECT_THROW(is_dead_end({-1.0}, {0.0, 0.0}, -0.5, 0.5), ShapeError);
}

TEST(FirstAlarm, Examples) {
  const std::vector<double> zeros(4, 0.0);
  EXPECT_FALSE(first_alarm(zeros, -0.5).has_value());
  const std::vector<double> s{-0.1, -0.6, -0.9};
  EXPECT_EQ(first_alarm(s, -0.5), 1);
}

TEST(Thresholds, PublishedDefaults) {
  EXPECT_EQ(Thresholds::defaults(Method::ded).delta_d, -0.15);
  EXPECT_EQ(Thresholds::defaults(Method::ded).delta_r, 0.85);
  EXPECT_EQ(Thresholds::defaults(Method::distded).delta_d, -0.5);
  EXPECT_EQ(Thresholds::defaults(Method::distded).delta_r, 0.5);
}

TEST(AssessState, ConstantHeadsFlagEverything) {
  for (Method m : {Method::ded, Method::distded}) {
    auto as = constant_assessor(m, -0.9f, 0.05f).with_thresholds(-0.5, 0.5);
    const std::vector<double> s{0.2, 0.3};
    const auto a = assess_state(as, s);
    ASSERT_EQ(a.avoid.size(), static_cast<std::size_t>(kActionCount));
    for (bool f : a.avoid) EXPECT_TRUE(f);
    EXPECT_TRUE(a.is_dead_end);
    EXPECT_NEAR(a.value_d[0], -0.9, 1e-6);
  }
}

TEST(AssessState, SafeHeadsFlagNothing) {
  for (Method m : {Method::ded, Method::distded}) {
    auto as = constant_assessor(m, 0.0f, 1.0f);
    const std::vector<double> s{0.2, 0.3};
    const auto a = assess_state(as, s);
    for (bool f : a.avoid) EXPECT_FALSE(f);
    EXPECT_FALSE(a.is_dead_end);
    EXPECT_EQ(a.alarm_score, 0.0);
  }
}

TEST(AssessState, Errors) {
  auto as = constant_assessor(Method::distded, -0.2f, 0.3f);
  const std::vector<double> bad{0.1};
  EXPECT_THROW(assess_state(as, bad), ShapeError);
  auto wrong_kind = as;
  wrong_kind.method = Method::ded;
  const std::vector<double> s{0.1, 0.1};
  EXPECT_THROW(assess_state(wrong_kind, s), KindError);
  EXPECT_THROW(assess_state(as.with_alpha(0.0), s), DomainError);
  auto swapped = as;
  std::swap(swapped.d_head, swapped.r_head);
  EXPECT_THROW(assess_state(swapped, s), ConfigError);
  EXPECT_THROW(security_gap(constant_assessor(Method::ded, -0.2f, 0.3f), s), KindError);
}

TEST(AssessState, ValuesInSupportsAndAlarmRange) {
  const auto as = random_assessor(3);
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const std::vector<double> s{rng.uniform(), rng.uniform()};
    const auto a = assess_state(as, s);
    for (double v : a.value_d) EXPECT_TRUE(v >= -1 && v <= 0);
    for (double v : a.value_r) EXPECT_TRUE(v >= 0 && v <= 1);
    EXPECT_GE(a.alarm_score, -1.0);
    EXPECT_LE(a.alarm_score, 0.0);
    EXPECT_DOUBLE_EQ(a.alarm_score, (a.median_d + (a.median_r - 1)) / 2);
    EXPECT_EQ(a.is_dead_end, a.median_d <= as.delta_d && a.median_r <= as.delta_r);
  }
}

TEST(AssessState, CvarNeverExceedsMeanOnSameParticles) {
  const auto as = random_assessor(5);
  Rng rng(6);
  for (int i = 0; i < 30; ++i) {
    const std::vector<double> s{rng.uniform(), rng.uniform()};
    const auto sv = evaluate_state(as, s);
    const auto a = assess_values(sv, as.alpha, as.delta_d, as.delta_r);
    for (std::size_t k = 0; k < sv.d.size(); ++k) {
      EXPECT_LE(a.value_d[k], sorted_mean(sv.d[k]) + 1e-12);
      EXPECT_LE(a.value_r[k], sorted_mean(sv.r[k]) + 1e-12);
    }
    const auto gap = security_gap(sv, as.alpha);
    for (double g : gap.d) EXPECT_GE(g, -1e-12);
    for (double g : gap.r) EXPECT_GE(g, -1e-12);
  }
}

TEST(AssessState, StateSeededTausAreOrderIndependent) {
  const auto as = random_assessor(7);
  const std::vector<double> s1{0.1, 0.9}, s2{0.7, 0.2};
  const auto a1 = evaluate_state(as, s1);
  evaluate_state(as, s2);
  const auto b1 = evaluate_state(as, s1);
  EXPECT_EQ(a1.d, b1.d);
  EXPECT_EQ(a1.r, b1.r);
  AssessmentCache<float> cache(as);
  EXPECT_EQ(cache.values(s1).d, a1.d);
}

TEST(AssessState, IndependentTausOption) {
  auto as = random_assessor(8);
  const std::vector<double> s{0.3, 0.3};
  const auto shared = evaluate_state(as, s);
  as.independent_taus = true;
  const auto indep = evaluate_state(as, s);
  EXPECT_EQ(shared.d, indep.d);
  EXPECT_NE(shared.r, indep.r);
}

TEST(SecurityGap, ConstantAndAlphaOne) {
  const auto as = constant_assessor(Method::distded, -0.3f, 0.6f);
  const std::vector<double> s{0.5, 0.5};
  for (double g : security_gap(as, s).d) EXPECT_NEAR(g, 0.0, 1e-12);
  const auto rnd = random_assessor(9);
  for (double g : security_gap(rnd.with_alpha(1.0), s).d) EXPECT_EQ(g, 0.0);
  for (double g : security_gap(rnd.with_alpha(1.0), s).r) EXPECT_EQ(g, 0.0);
}

// Lowering alpha can only add flagged actions at fixed thresholds.
TEST(AssessState, FlagSetMonotoneInAlpha) {
  Rng rng(10);
  for (int i = 0; i < 100; ++i) {
    const auto as = random_assessor(100 + static_cast<std::uint64_t>(i), 100);
    const std::vector<double> s{rng.uniform(), rng.uniform()};
    const auto sv = evaluate_state(as, s);
    const double dd = rng.uniform(-1, 0), dr = rng.uniform(0, 1);
    std::vector<bool> prev(kActionCount, true);
    for (double alpha : {0.02, 0.1, 0.3, 0.6, 1.0}) {
      const auto a = assess_values(sv, alpha, dd, dr);
      for (int k = 0; k < kActionCount; ++k) {
        if (a.avoid[k]) EXPECT_TRUE(prev[k]) << "alpha " << alpha;
        prev[k] = a.avoid[k];
      }
    }
  }
}

TEST(AssessState, AlphaOneEqualsMeanFlags) {
  const auto as = random_assessor(11).with_alpha(1.0);
  const std::vector<double> s{0.4, 0.6};
  const auto sv = evaluate_state(as, s);
  const auto a = assess_values(sv, 1.0, as.delta_d, as.delta_r);
  for (std::size_t k = 0; k < sv.d.size(); ++k) {
    EXPECT_EQ(a.value_d[k], sorted_mean(sv.d[k]));
    EXPECT_EQ(a.avoid[k], flag_action(sorted_mean(sv.d[k]), sorted_mean(sv.r[k]), as.delta_d, as.delta_r));
  }
}

TEST(TrajectoryAlarm, FirstLowScore) {
  const auto danger = constant_assessor(Method::ded, -0.9f, 0.0f);
  const auto safe = constant_assessor(Method::ded, 0.0f, 1.0f);
  TrajectoryRecord tr;
  tr.outcome = Outcome::negative;
  tr.transitions.push_back({{0.1, 0.1}, 0, {0.2, 0.1}, false, std::nullopt});
  tr.transitions.push_back({{0.2, 0.1}, 0, {1.0, 0.1}, true, Outcome::negative});
  EXPECT_EQ(trajectory_alarm(danger, tr), 0);
  EXPECT_FALSE(trajectory_alarm(safe, tr).has_value());
  EXPECT_THROW(trajectory_alarm(safe, TrajectoryRecord{}), DomainError);
}
