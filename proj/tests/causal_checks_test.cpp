#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "prescriptive/causal_checks.hpp"
#include "prescriptive/learners.hpp"
#include "prescriptive/scm.hpp"
#include "test_support.hpp"

namespace prescriptive {
namespace {

TEST(Positivity, RctPasses) {
  auto d = SampleDataset(BuildScm(FourSegmentPreset()), 20000, 1);
  auto report = MakePositivityReport(d, FitPropensity(d));
  EXPECT_EQ(report.verdict, Verdict::kPass);
  EXPECT_EQ(report.fraction_below_eps, 0.0);
  EXPECT_EQ(report.fraction_above_one_minus_eps, 0.0);
  EXPECT_EQ(report.per_cell_arm_counts.size(), 4u);
  EXPECT_GT(report.min_propensity, 0.4);
  EXPECT_LT(report.max_propensity, 0.6);
}

TEST(Positivity, NeverTreatedCellFails) {
  auto scm = BuildScm(testing::NeverTreatedCellConfig());
  auto d = SampleDataset(scm, 4000, 2);
  auto report = MakePositivityReport(d, FitPropensity(d));
  EXPECT_EQ(report.verdict, Verdict::kFail);
  const auto& south = scm.CellFeatures(scm.CellIndex("unreachable"));
  bool found = false;
  for (const auto& s : report.per_cell_arm_counts) {
    if (s.key == south) {
      found = true;
      EXPECT_EQ(s.treated, 0u);
      EXPECT_GT(s.control, 0u);
    }
  }
  EXPECT_TRUE(found);
}

TEST(Positivity, ZeroEpsDependsOnlyOnArmCounts) {
  auto d = SampleDataset(BuildScm(SimpsonPreset()), 5000, 3);
  const auto e = d.TruePropensities();
  auto report = PositivityReportFromPropensities(d, e, 0.0);
  EXPECT_EQ(report.fraction_below_eps, 0.0);
  EXPECT_EQ(report.fraction_above_one_minus_eps, 0.0);
  EXPECT_EQ(report.verdict, Verdict::kPass);
  auto bad = SampleDataset(BuildScm(testing::NeverTreatedCellConfig()), 2000, 3);
  EXPECT_EQ(PositivityReportFromPropensities(bad, std::vector<double>(bad.size(), 0.5), 0.0).verdict,
            Verdict::kFail);
}

TEST(Positivity, ShrinkingEpsNeverTurnsPassIntoFail) {
  auto scm = BuildScm(SimpsonPreset());
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto d = SampleDataset(scm, 3000, seed);
    std::vector<double> e = d.TruePropensities();
    // Push some propensities towards the edges.
    for (std::size_t i = 0; i < e.size(); i += 37) e[i] = (i % 2) ? 0.01 : 0.97;
    Verdict prev = Verdict::kFail;
    for (double eps : {0.3, 0.2, 0.1, 0.05, 0.02, 0.005, 0.0}) {
      auto v = PositivityReportFromPropensities(d, e, eps).verdict;
      if (prev != Verdict::kFail) EXPECT_NE(v, Verdict::kFail) << "eps " << eps;
      prev = v;
    }
  }
}

TEST(Positivity, WarnBetweenZeroAndThreshold) {
  auto d = SampleDataset(BuildScm(FourSegmentPreset()), 1000, 4);
  std::vector<double> e(d.size(), 0.5);
  e[0] = 0.001;
  auto report = PositivityReportFromPropensities(d, e);
  EXPECT_EQ(report.verdict, Verdict::kWarn);
  EXPECT_DOUBLE_EQ(report.fraction_below_eps, 0.001);
}

TEST(Balance, RctIsBalanced) {
  auto d = SampleDataset(BuildScm(FourSegmentPreset()), 100000, 5);
  auto report = MakeBalanceReport(d);
  EXPECT_LT(report.max_abs_smd_unweighted, 0.03);
  EXPECT_FALSE(report.max_abs_smd_weighted.has_value());
}

TEST(Balance, SimpsonImbalanceMatchesClosedForm) {
  auto d = SampleDataset(BuildScm(SimpsonPreset()), 100000, 7);
  auto report = MakeBalanceReport(d);
  // Engaged share 0.2 among treated, 0.8 among controls; pooled sd 0.4.
  ASSERT_EQ(report.features.size(), 2u);
  EXPECT_NEAR(report.features[0].smd_unweighted, (0.2 - 0.8) / 0.4, 0.05);
  EXPECT_GT(std::abs(report.features[0].smd_unweighted), 0.5);
}

TEST(Balance, TruePropensityWeightsRestoreBalance) {
  auto d = SampleDataset(BuildScm(SimpsonPreset()), 100000, 7);
  const auto w = InverseProbabilityWeights(d, d.TruePropensities());
  auto report = MakeBalanceReport(d, w);
  EXPECT_GT(report.max_abs_smd_unweighted, 0.5);
  ASSERT_TRUE(report.max_abs_smd_weighted.has_value());
  EXPECT_LT(*report.max_abs_smd_weighted, 0.05);
}

TEST(Balance, ZeroVarianceSentinels) {
  Dataset d;
  d.feature_count = 2;
  d.records = {{0, {1.0, 0.0}, 1, 0}, {1, {1.0, 0.0}, 0, 0},
               {2, {1.0, 1.0}, 1, 0}, {3, {1.0, 1.0}, 1, 0},
               {4, {1.0, 0.0}, 0, 0}};
  auto report = MakeBalanceReport(d);
  EXPECT_EQ(report.features[0].smd_unweighted, 0.0);
  Dataset s;
  s.feature_count = 1;
  s.records = {{0, {1.0}, 1, 0}, {1, {0.0}, 0, 0}};
  EXPECT_EQ(MakeBalanceReport(s).features[0].smd_unweighted,
            std::numeric_limits<double>::infinity());
}

TEST(Balance, SingleArmRejected) {
  auto d = SampleDataset(BuildScm(FourSegmentPreset()), 50, 1);
  for (auto& r : d.records) r.treatment = 0;
  try {
    MakeBalanceReport(d);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingleArmDataset);
  }
}

TEST(Consistency, Cases) {
  auto d = SampleDataset(BuildScm(FourSegmentPreset()), 1000, 8);
  EXPECT_TRUE(ConsistencyCheck(d));
  d.records[17].outcome ^= 1;
  EXPECT_FALSE(ConsistencyCheck(d));
  EXPECT_TRUE(ConsistencyCheck(Dataset{}));
  try {
    ConsistencyCheck(d.AsLogged());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingCounterfactuals);
  }
}

TEST(Reports, JsonWritesInfinityAsString) {
  Dataset s;
  s.feature_count = 1;
  s.records = {{0, {1.0}, 1, 0}, {1, {0.0}, 0, 0}};
  auto j = ToJson(MakeBalanceReport(s));
  EXPECT_EQ(j.dump().find("null"), std::string::npos);
  EXPECT_NE(j.dump().find("\"inf\""), std::string::npos);
}

}  // namespace
}  // namespace prescriptive
