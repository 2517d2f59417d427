#include <gtest/gtest.h>

#include <cmath>

#include "coregauge/experiments.hpp"
#include "coregauge/io.hpp"

using namespace coregauge;
using namespace coregauge::experiments;

TEST(FitPowerLaw, TwoPointExactFits) {
  EXPECT_NEAR(fit_power_law({100, 1000}, {0.1, 0.01}).slope, -1.0, 1e-12);
  EXPECT_NEAR(fit_power_law({100, 400}, {0.3, 0.15}).slope, -0.5, 1e-12);
  EXPECT_TRUE(std::isnan(fit_power_law({100, 400}, {0.3, 0.15}).slope_stderr));
}

TEST(FitPowerLaw, RecoversSyntheticExponent) {
  for (double b : {-1.0, -0.5, -1.0 / 3.0, 0.25}) {
    std::vector<double> n, c;
    for (double x : {50.0, 100.0, 200.0, 400.0, 800.0, 1600.0}) {
      n.push_back(x);
      c.push_back(2.5 * std::pow(x, b));
    }
    const auto fit = fit_power_law(n, c);
    EXPECT_NEAR(fit.slope, b, 1e-12);
    EXPECT_NEAR(fit.intercept, std::log(2.5), 1e-11);
    EXPECT_NEAR(fit.slope_stderr, 0.0, 1e-10);
    EXPECT_EQ(fit.points, 6);
  }
}

TEST(FitPowerLaw, DegenerateInputs) {
  EXPECT_EQ(fit_power_law({100}, {0.1}).points, 1);
  EXPECT_TRUE(std::isnan(fit_power_law({100}, {0.1}).slope));
  EXPECT_THROW(fit_power_law({100, 100}, {0.1, 0.2}), UsageError);
  EXPECT_THROW(fit_power_law({100}, {0.1, 0.2}), UsageError);
}

TEST(LowerBoundMarket, Construction) {
  const auto c = make_lower_bound_market(2, 3);
  EXPECT_EQ(c.worker_counts, (std::vector<int>{3, 3}));
  EXPECT_EQ(c.employer_counts, (std::vector<int>{4}));
  EXPECT_EQ(c.u(0, 0), 0.0);
  EXPECT_EQ(c.u(1, 0), 3.0);
  EXPECT_EQ(make_lower_bound_market(3, 2).employer_counts, (std::vector<int>{5}));
  const auto tiny = make_lower_bound_market(2, 1);
  EXPECT_EQ(tiny.worker_counts, (std::vector<int>{1, 1}));
  EXPECT_EQ(tiny.employer_counts, (std::vector<int>{2}));
  EXPECT_THROW(make_lower_bound_market(1, 5), ConfigError);
}

TEST(LowerBoundEvent, IntervalMembership) {
  // n~ = 16, K = 2: h = 1/4, windows [-1, -0.75] and (-0.75, -0.5].
  EXPECT_TRUE(lower_bound_event({-0.9, -0.3, 0.2}, 16, 2));
  EXPECT_FALSE(lower_bound_event({-0.9, -0.8}, 16, 2));
  EXPECT_FALSE(lower_bound_event({-0.9, -0.6}, 16, 2));
  EXPECT_FALSE(lower_bound_event({-0.3, 0.2}, 16, 2));
}

TEST(LowerBoundEvent, XValues) {
  MarketRealization r;
  r.config = make_lower_bound_market(3, 1);
  r.worker_type = {0, 1, 2};
  r.employer_type = {0, 0, 0};
  r.epsilon = Matrix<double>(3, 3, 0.0);
  r.epsilon(1, 0) = 0.7;
  r.epsilon(1, 1) = 0.2;
  r.epsilon(1, 2) = 0.4;
  EXPECT_NEAR(lower_bound_x(r)[1], 0.4 - 0.7, 1e-15);
}

TEST(ThetaWidth, ClosedFormOnASmallGraph) {
  ConstraintGraph g;
  g.add_node({0, 0}, 1);
  g.add_node({1, 0}, 1);
  g.lower_box = {-1.0, -0.4};
  g.upper_box = {1.0, 0.5};
  g.diff_edges.push_back({0, 1, 0.3});  // a1 - a0 <= 0.3
  g.diff_edges.push_back({1, 0, 0.6});  // a0 - a1 <= 0.6
  // From alpha = (0, 0): theta in [max(-0.4, -0.6), min(0.5, 0.3)].
  EXPECT_NEAR(theta_width(g, {0.0, 0.0}, 0), 0.7, 1e-15);
}

TEST(Apportion, LargestRemainderAndFloorOfOne) {
  EXPECT_EQ(apportion({0.5, 0.5}, 75), (std::vector<int>{38, 37}));
  EXPECT_EQ(apportion({0.23, 0.26, 0.24, 0.27}, 1000), (std::vector<int>{230, 260, 240, 270}));
  EXPECT_EQ(apportion({0.999, 0.001}, 10), (std::vector<int>{10, 1}));
}

TEST(ImbalancedMarket, ImbalanceRules) {
  Theorem2Params p;
  p.worker_shares = {1, 1};
  p.u = {1.0, 0.5};
  auto c = theorem2_market(p, 200);
  EXPECT_EQ(c.worker_counts, (std::vector<int>{38, 37}));
  EXPECT_EQ(c.employer_counts, (std::vector<int>{125}));
  p.imbalance.kind = ImbalanceRule::Kind::kFixed;
  p.imbalance.m = 1;
  c = theorem2_market(p, 200);
  EXPECT_EQ(c.n_workers(), 99);
  EXPECT_EQ(c.n_employers(), 100);
}

namespace {

ScalingParams balanced_one_type() {
  ScalingParams p;
  p.market.K = 1;
  p.market.Q = 1;
  p.market.worker_shares = {1};
  p.market.employer_shares = {1};
  p.market.u = Matrix<double>(1, 1, 1.0);
  p.n_grid = {10, 40, 160};
  p.trials = 8;
  p.seed = 12;
  return p;
}

}  // namespace

TEST(RunTrials, BalancedOneTypeCoreNeverBelowU) {
  const auto rep = scaling_experiment(balanced_one_type());
  ASSERT_EQ(rep.rows.size(), 3u);
  for (const auto& row : rep.rows) EXPECT_GE(row.mean_C, 1.0);
  for (const auto& t : rep.trials) EXPECT_GE(t.C, 1.0);
  // a balanced one-type market violates the no-balanced-submarket assumption
  for (const auto& row : rep.rows) EXPECT_FALSE(row.assumption1);
  EXPECT_EQ(rep.lemma1_violations, 0);
}

TEST(RunTrials, MeanRecomputableFromTrials) {
  auto p = balanced_one_type();
  p.market.employer_shares = {1.3};
  const auto rep = scaling_experiment(p);
  for (const auto& row : rep.rows) {
    double sum = 0.0;
    int count = 0;
    for (const auto& t : rep.trials)
      if (t.grid_index == row.grid_index) {
        sum += t.C;
        ++count;
      }
    EXPECT_NEAR(row.mean_C, sum / count, 1e-12);
  }
  EXPECT_EQ(rep.lemma1_violations, 0);
}

TEST(RunTrials, ReplayIsIndependentOfWorkerCount) {
  LowerBoundParams p;
  p.n_tilde_grid = {10, 30};
  p.trials = 12;
  p.seed = 99;
  const auto one = lower_bound_experiment(p, 1);
  const auto four = lower_bound_experiment(p, 4);
  EXPECT_EQ(io::trials_csv(one), io::trials_csv(four));
  EXPECT_EQ(io::aggregate_csv(one), io::aggregate_csv(four));
  ASSERT_EQ(one.trials.size(), four.trials.size());
  for (std::size_t t = 0; t < one.trials.size(); ++t) EXPECT_EQ(one.trials[t].C, four.trials[t].C);
}

TEST(RunTrials, SeedsAreAPureFunctionOfGridAndTrial) {
  EXPECT_EQ(trial_seed(5, 2, 7), trial_seed(5, 2, 7));
  EXPECT_NE(trial_seed(5, 2, 7), trial_seed(5, 7, 2));
  EXPECT_NE(resample_seed(trial_seed(5, 2, 7), 1), trial_seed(5, 2, 7));
}

TEST(RunTrials, RejectsTooFewTrials) {
  auto p = balanced_one_type();
  p.trials = 1;
  EXPECT_THROW(scaling_experiment(p), ConfigError);
}

TEST(ImbalancedExperiment, BoxDiagnosticsRecorded) {
  Theorem2Params p;
  p.worker_shares = {1, 1};
  p.u = {1.0, 0.5};
  p.n_grid = {100, 200};
  p.trials = 6;
  const auto rep = theorem2_experiment(p);
  EXPECT_GT(rep.counters.at("zu_applicable_trials"), 0);
  // each width is bounded by its own type's Z - U
  EXPECT_EQ(rep.counters.at("zu_per_type_holding_trials"), rep.counters.at("zu_applicable_trials"));
  for (const auto& t : rep.trials) {
    ASSERT_TRUE(t.aux.count("Z_0"));
    ASSERT_TRUE(t.aux.count("U_1"));
    EXPECT_LE(t.aux.at("min_width"), t.aux.at("min_Z_minus_U") + 1e-9);
  }
}

TEST(ImbalancedExperiment, RejectsNegativeUtilities) {
  Theorem2Params p;
  p.worker_shares = {1, 1};
  p.u = {1.0, -0.5};
  p.n_grid = {100};
  EXPECT_THROW(theorem2_experiment(p), ConfigError);
}

TEST(LemmaAudit, CloudFrequenciesAndTables) {
  LemmaParams p;
  p.n_grid = {500};
  p.D_grid = {2};
  p.delta_rules = {DeltaRule{DeltaRule::Kind::kInverseDim, 0.0},
                   DeltaRule{DeltaRule::Kind::kFixed, 0.5}};
  p.trials = 5;
  const auto rep = lemma_audit_experiment(p);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_EQ(rep.rows[0].params.at("delta"), std::pow(500.0, -0.5));
  EXPECT_EQ(rep.rows[1].params.at("delta"), 0.5);
  ASSERT_TRUE(rep.tables.count("regions_D2"));
  EXPECT_EQ(rep.tables.at("regions_D2").size(), 1u + 2 * 5);
  EXPECT_TRUE(rep.frequencies.count("B1 n=500 D=2 delta=inverse_dim"));
}

TEST(LemmaAudit, MarketPartRunsTheWidthAudit) {
  LemmaParams p;
  p.n_grid = {100};
  p.D_grid = {1};
  p.delta_rules = {DeltaRule{DeltaRule::Kind::kFixed, 0.5}};
  p.trials = 3;
  MarketAuditParams m;
  m.market.K = 2;
  m.market.Q = 2;
  m.market.worker_shares = {0.23, 0.26};
  m.market.employer_shares = {0.24, 0.27};
  m.market.u = Matrix<double>(2, 2, 1.0);
  m.n = 200;
  m.delta = DeltaRule{DeltaRule::Kind::kPower, -0.5};
  m.trials = 4;
  p.market = m;
  const auto rep = lemma_audit_experiment(p);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_EQ(rep.rows[1].label, "market audit");
  EXPECT_EQ(rep.counters.at("lemma_violations"), 0);
  EXPECT_GT(rep.counters.at("lemma3_checks") + rep.counters.at("lemma4_checks"), 0);
}
