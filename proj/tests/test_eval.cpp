#include <gtest/gtest.h>

#include "distded/eval.hpp"

using namespace distded;

namespace {

// DDQN head whose value is a hard step in x at x = 0.5: `low` left of it and
// `high` right of it (after clamping to the support).
ValueHead<float> step_head(Mode mode, float low, float high) {
  Rng rng(1);
  auto h = ValueHead<float>::make(HeadKind::ddqn, mode, 2, kActionCount, 4, 4, rng);
  auto& n = h.online.torso;
  for (auto& w : n.weights) w.setZero();
  for (auto& b : n.biases) b.setZero();
  n.weights[0](0, 0) = 100.0f;
  n.biases[0](0) = -50.0f;
  n.weights[1](0, 0) = 1.0f;
  n.weights[2].col(0).setConstant(high - low);
  n.biases[2].setConstant(low);
  h.target = h.online;
  return h;
}

// Alarms exactly on states with x > 0.5.
RiskAssessor<float> oracle_assessor() {
  return {step_head(Mode::D, 0.0f, -1.0f), step_head(Mode::R, 1.0f, 0.0f), Method::ded, 1.0, -0.15, 0.85, 1, 0};
}

RiskAssessor<float> silent_assessor() {
  return {step_head(Mode::D, 0.0f, 0.0f), step_head(Mode::R, 1.0f, 1.0f), Method::ded, 1.0, -0.15, 0.85, 1, 0};
}

// `before` steps at x = 0.1, then `inside` steps at x = 0.9.
TrajectoryRecord path(Outcome o, int before, int inside) {
  TrajectoryRecord tr;
  tr.outcome = o;
  const int n = before + inside;
  for (int t = 0; t < n; ++t) {
    const double x = t < before ? 0.1 : 0.9;
    tr.transitions.push_back({{x, t / 20.0}, 0, {x, (t + 1) / 20.0}, t == n - 1,
                              t == n - 1 ? std::optional<Outcome>(o) : std::nullopt});
  }
  if (inside > 0) tr.zone_entry_index = before;
  return tr;
}

std::vector<TrajectoryRecord> oracle_set() {
  std::vector<TrajectoryRecord> out;
  for (int i = 0; i < 10; ++i) out.push_back(path(Outcome::negative, 2 + i % 4, 3));
  for (int i = 0; i < 6; ++i) out.push_back(path(Outcome::positive, 5 + i, 0));
  out.push_back(path(Outcome::timeout, 4, 2));
  return out;
}

RocPoint pt(double fpr, double tpr) { return {0, 0, tpr, fpr}; }

std::vector<TrajectoryMedians> random_medians(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TrajectoryMedians> out;
  for (int i = 0; i < 60; ++i) {
    TrajectoryMedians m;
    m.outcome = static_cast<Outcome>(i % 3);
    for (int t = 0; t < 1 + static_cast<int>(rng.below(6)); ++t) {
      m.median_d.push_back(rng.uniform(-1, 0));
      m.median_r.push_back(rng.uniform(0, 1));
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace

TEST(Grids, ThresholdAndAlpha) {
  const auto g = threshold_grid(100);
  ASSERT_EQ(g.size(), 100u);
  EXPECT_EQ(g.front(), -1.0);
  EXPECT_EQ(g.back(), 0.0);
  EXPECT_THROW(threshold_grid(1), UsageError);
  const auto a = alpha_grid();
  ASSERT_EQ(a.size(), 50u);
  EXPECT_DOUBLE_EQ(a.front(), 0.02);
  EXPECT_EQ(a.back(), 1.0);
}

TEST(Auc, ClosedForms) {
  EXPECT_DOUBLE_EQ(auc({pt(0.25, 0.25), pt(0.5, 0.5), pt(0.75, 0.75)}), 0.5);
  EXPECT_DOUBLE_EQ(auc({pt(0, 1), pt(1, 1)}), 1.0);
  EXPECT_DOUBLE_EQ(auc({pt(1, 0), pt(1, 0)}), 0.0);
  // Single interior point: two trapezoids.
  EXPECT_DOUBLE_EQ(auc({pt(0.5, 1), pt(0.5, 1)}), 0.5 * 0.5 + 0.5);
  EXPECT_THROW(auc({pt(0.5, 0.5)}), EvaluationError);
}

TEST(Auc, OrderAndDuplicateInvariant) {
  const std::vector<RocPoint> a{pt(0.1, 0.3), pt(0.4, 0.6), pt(0.7, 0.9)};
  const std::vector<RocPoint> b{pt(0.7, 0.9), pt(0.1, 0.3), pt(0.4, 0.6), pt(0.4, 0.6), pt(0.1, 0.3)};
  EXPECT_NEAR(auc(a), auc(b), 1e-15);
}

TEST(RocSweep, ExtremesAndMonotone) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto pts = roc_sweep(random_medians(seed), 100);
    ASSERT_EQ(pts.size(), 100u);
    EXPECT_EQ(pts.back().tpr, 1.0);
    EXPECT_EQ(pts.back().fpr, 1.0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      EXPECT_DOUBLE_EQ(pts[i].delta_r, 1.0 + pts[i].delta_d);
      if (i == 0) continue;
      EXPECT_GE(pts[i].tpr, pts[i - 1].tpr);
      EXPECT_GE(pts[i].fpr, pts[i - 1].fpr);
    }
    const double a = auc(pts);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(RocSweep, SingleClassIsError) {
  auto m = random_medians(1);
  std::erase_if(m, [](const auto& t) { return t.outcome == Outcome::positive; });
  EXPECT_THROW(roc_sweep(m), EvaluationError);
}

TEST(RocSweep, TimeoutsIgnored) {
  auto m = random_medians(2);
  const auto base = roc_sweep(m);
  std::erase_if(m, [](const auto& t) { return t.outcome == Outcome::timeout; });
  const auto trimmed = roc_sweep(m);
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_EQ(base[i].tpr, trimmed[i].tpr);
    EXPECT_EQ(base[i].fpr, trimmed[i].fpr);
  }
}

TEST(EarlyWarning, OracleAlarmsAtEntry) {
  const auto trajs = oracle_set();
  AssessmentCache<float> cache(oracle_assessor());
  const auto gaps = gap_samples(cache, trajs);
  for (const auto& g : gaps) {
    const auto& tr = trajs[static_cast<std::size_t>(g.trajectory)];
    EXPECT_EQ(g.alarm, tr.zone_entry_index);
    if (tr.zone_entry_index) EXPECT_EQ(g.gap, 0);
  }
  const auto st = gap_stats(gaps, trajs);
  EXPECT_EQ(st.count, 11u);
  EXPECT_EQ(st.mean, 0.0);
  EXPECT_EQ(st.missed_fraction, 0.0);
}

TEST(EarlyWarning, SilentAssessorMissesEverything) {
  const auto trajs = oracle_set();
  AssessmentCache<float> cache(silent_assessor());
  const auto st = gap_stats(gap_samples(cache, trajs), trajs);
  EXPECT_EQ(st.count, 0u);
  EXPECT_EQ(st.missed_fraction, 1.0);
}

TEST(EarlyWarning, PairedStudy) {
  const auto trajs = oracle_set();
  const auto rep = early_warning_study<float>(
      {{"oracle", oracle_assessor()}, {"again", oracle_assessor()}, {"silent", silent_assessor()}}, trajs);
  ASSERT_EQ(rep.paired_differences.size(), 2u);
  EXPECT_EQ(rep.paired_differences[0], std::vector<double>(11, 0.0));
  EXPECT_TRUE(rep.paired_differences[1].empty());
  EXPECT_NE(rep.csv().find("assessor,trajectory,alarm,zone_entry,gap"), std::string::npos);
  EXPECT_THROW(early_warning_study<float>({{"oracle", oracle_assessor()}}, {}), UsageError);
}

TEST(RocReport, OracleSeparatesPerfectly) {
  const auto trajs = oracle_set();
  AssessmentCache<float> cache(oracle_assessor());
  const auto r = roc_report(cache, trajs, 1.0, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(r.auc, 1.0);
  EXPECT_EQ(r.missed_fraction, 0.0);
  EXPECT_TRUE(std::isnan(r.alpha));
  AssessmentCache<float> silent(silent_assessor());
  // Every trajectory is flagged only at the last threshold, where both rates are 1.
  EXPECT_DOUBLE_EQ(roc_report(silent, trajs, 1.0, 0.0, 1.0).auc, 0.5);
}

TEST(Histograms, MassConservedPerOutcome) {
  const auto trajs = oracle_set();
  AssessmentCache<float> cache(oracle_assessor());
  const auto h = threshold_histograms(cache, trajs, {1, 2, 4, 8, 16, 32}, 20);
  std::map<Outcome, std::size_t> states;
  for (const auto& tr : trajs) states[tr.outcome] += tr.size();
  for (Outcome o : {Outcome::negative, Outcome::positive, Outcome::timeout})
    for (Mode m : {Mode::D, Mode::R}) EXPECT_EQ(h.mass(o, m), states[o]);
  EXPECT_THROW(threshold_histograms(cache, trajs, {2, 4}, 20), UsageError);
}

TEST(Histograms, OneStepTrajectoryLandsInOneBin) {
  AssessmentCache<float> cache(oracle_assessor());
  const auto h = threshold_histograms(cache, {path(Outcome::negative, 0, 1)}, {1, 2, 4}, 20);
  ASSERT_EQ(h.bins.size(), 2u);
  for (const auto& b : h.bins) {
    EXPECT_EQ(b.time_bin, 0);
    EXPECT_EQ(b.count, 1u);
  }
  // median_d = -1 lands in the lowest D bin, median_r = 0 in the lowest R bin.
  EXPECT_EQ(h.bins[0].value_bin, 0);
  EXPECT_EQ(h.bins[1].value_bin, 0);
}

class SweepFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    const LifeGate env(GridSpec::lifegate());
    ds_ = new OfflineDataset(collect_random(env, 4000, 3));
    trajs_ = new std::vector<TrajectoryRecord>(mixed_outcome_trajectories(env, 60, 4));
  }
  static void TearDownTestSuite() {
    delete ds_;
    delete trajs_;
  }
  static TrainConfig cfg() {
    TrainConfig c;
    c.epochs = 1;
    c.batch_size = 64;
    c.hidden = 16;
    c.embed_dim = 8;
    c.seed = 5;
    c.beta = 0.1;
    return c;
  }
  static EvalSettings settings() {
    EvalSettings es;
    es.alphas = {0.1, 0.5, 1.0};
    es.n_thresholds = 20;
    es.k_eval = 50;
    return es;
  }
  static OfflineDataset* ds_;
  static std::vector<TrajectoryRecord>* trajs_;
};
OfflineDataset* SweepFixture::ds_ = nullptr;
std::vector<TrajectoryRecord>* SweepFixture::trajs_ = nullptr;

TEST_F(SweepFixture, AblationShapes) {
  PairTrainer<float> tr;
  const auto cells = ablation_matrix(tr, *ds_, cfg(), *trajs_, settings());
  ASSERT_EQ(cells.size(), 4u);
  EXPECT_EQ(tr.trained(), 4u);
  for (const auto& c : cells) {
    EXPECT_EQ(c.reports.size(), is_distributional(c.method) ? 3u : 1u);
    EXPECT_EQ(std::isnan(c.best_alpha), !is_distributional(c.method));
    for (const auto& r : c.reports) {
      EXPECT_GE(r.auc, 0.0);
      EXPECT_LE(r.auc, 1.0);
      EXPECT_LE(r.auc, c.max_auc);
    }
  }
  EXPECT_NE(ablation_csv(cells).find("distded,iqn,1,"), std::string::npos);
}

TEST_F(SweepFixture, FullFractionReusesAblationCells) {
  PairTrainer<float> tr;
  const auto cells = ablation_matrix(tr, *ds_, cfg(), *trajs_, settings());
  const auto rows = data_fraction_sweep(tr, *ds_, cfg(), {1.0}, *trajs_, settings(), 7);
  EXPECT_EQ(tr.trained(), 4u);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].ded_auc, cells[0].max_auc);
  EXPECT_EQ(rows[0].distded_max_auc, cells[3].max_auc);
  const auto half = data_fraction_sweep(tr, *ds_, cfg(), {0.5}, *trajs_, settings(), 7);
  EXPECT_EQ(tr.trained(), 6u);
  EXPECT_EQ(fraction_csv(half).substr(0, 14), "data_fraction,");
}

TEST_F(SweepFixture, BetaZeroMatchesUnpenalizedCell) {
  PairTrainer<float> tr;
  const auto cells = ablation_matrix(tr, *ds_, cfg(), *trajs_, settings());
  const auto rows = beta_sweep(tr, *ds_, cfg(), {0.0, 0.1}, *trajs_, settings());
  ASSERT_EQ(rows.size(), 2u);
  // beta = 0.1 is the ablation's DistDeD cell; beta = 0 is one new pair.
  EXPECT_EQ(tr.trained(), 5u);
  const auto& no_cql = cells[2];
  ASSERT_EQ(rows[0].reports.size(), no_cql.reports.size());
  for (std::size_t i = 0; i < no_cql.reports.size(); ++i) EXPECT_EQ(rows[0].reports[i].auc, no_cql.reports[i].auc);
  EXPECT_EQ(rows[1].max_auc, cells[3].max_auc);
  auto c = cfg();
  c.beta = 0.0;
  const auto& a = tr.get("full", *ds_, Method::distded, c);
  const auto& b = tr.get("full", *ds_, Method::distded_no_cql, c);
  EXPECT_EQ(head_blob(a.d), head_blob(b.d));
  EXPECT_EQ(head_blob(a.r), head_blob(b.r));
  EXPECT_NE(beta_sweep_csv(rows).find("is_best_alpha"), std::string::npos);
}
