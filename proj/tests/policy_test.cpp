#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "prescriptive/evaluation.hpp"
#include "prescriptive/policy.hpp"
#include "test_support.hpp"

namespace prescriptive {
namespace {

using testing::CellUnits;
using testing::Ids;
using testing::Jaccard;
using testing::TreatedIds;

class FourSegmentPolicies : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    scm_ = new Scm(BuildScm(FourSegmentPreset()));
    data_ = new Dataset(SampleDataset(*scm_, 50000, 3));
    ite_ = new IteModel(FitTLearner(*data_));
    // Baseline churn model on untreated rows; churn = 1 - retained.
    Dataset churn = *data_;
    for (auto& r : churn.records) r.outcome = 1 - r.outcome;
    churn_ = new LinearModel(FitOutcomeModel(churn, FitConfig{}, 0));
  }
  static void TearDownTestSuite() {
    delete churn_;
    delete ite_;
    delete data_;
    delete scm_;
  }

  static Scm* scm_;
  static Dataset* data_;
  static IteModel* ite_;
  static LinearModel* churn_;
};

Scm* FourSegmentPolicies::scm_ = nullptr;
Dataset* FourSegmentPolicies::data_ = nullptr;
IteModel* FourSegmentPolicies::ite_ = nullptr;
LinearModel* FourSegmentPolicies::churn_ = nullptr;

TEST_F(FourSegmentPolicies, SegmentTargeting) {
  const auto ids = Ids(*data_);
  const auto persuadables = CellUnits(*data_, *scm_, "persuadable");
  {
    SCOPED_TRACE("predictive t=0.7 treats only lost causes");
    auto batch = DecidePredictive(*churn_, 0.7, *data_, OutcomeDirection::kLowerIsBetter);
    EXPECT_EQ(TreatedIds(ids, batch.Actions()), CellUnits(*data_, *scm_, "lost_cause"));
  }
  {
    SCOPED_TRACE("prescriptive treats persuadables");
    // At threshold 0 the zero-effect segments split on estimation noise, so
    // the exact claims are: every persuadable treated, no sleeping dog.
    auto batch = DecidePrescriptive(*ite_, *data_, OutcomeDirection::kHigherIsBetter);
    const auto treated = TreatedIds(ids, batch.Actions());
    EXPECT_TRUE(std::includes(treated.begin(), treated.end(), persuadables.begin(),
                              persuadables.end()));
    for (auto id : CellUnits(*data_, *scm_, "sleeping_dog")) EXPECT_EQ(treated.count(id), 0u);
    auto margin = DecidePrescriptive(*ite_, *data_, OutcomeDirection::kHigherIsBetter, 0.1);
    EXPECT_GE(Jaccard(TreatedIds(ids, margin.Actions()), persuadables), 0.9);
  }
  {
    SCOPED_TRACE("threshold 1 treats no one");
    auto batch = DecidePrescriptive(*ite_, *data_, OutcomeDirection::kHigherIsBetter, 1.0);
    EXPECT_EQ(batch.TreatedCount(), 0u);
  }
  {
    SCOPED_TRACE("budget with oracle scores");
    std::vector<double> scores;
    for (const auto& r : data_->records) scores.push_back(r.tau_true);
    auto batch = DecideBudgetByScores(*data_, scores, 0.25, true);
    EXPECT_EQ(TreatedIds(ids, batch.Actions()), persuadables);
  }
  {
    SCOPED_TRACE("budget monotone in q");
    std::set<std::uint64_t> prev;
    for (int k = 0; k <= 20; ++k) {
      auto batch = DecideBudget(*ite_, *data_, k / 20.0, false, OutcomeDirection::kHigherIsBetter);
      auto cur = TreatedIds(ids, batch.Actions());
      EXPECT_TRUE(std::includes(cur.begin(), cur.end(), prev.begin(), prev.end()));
      EXPECT_EQ(cur.size(), TopCount(k / 20.0, data_->size()));
      prev = std::move(cur);
    }
  }
  {
    SCOPED_TRACE("oracle dominance");
    const double best = OracleValue(Decide(OraclePolicy(*data_, OutcomeDirection::kHigherIsBetter), *data_).Actions(), *data_);
    for (double q : {0.1, 0.25, 0.5, 1.0}) {
      auto b = DecideBudget(*ite_, *data_, q, false, OutcomeDirection::kHigherIsBetter);
      EXPECT_GE(best, OracleValue(b.Actions(), *data_));
    }
    EXPECT_GE(best, OracleValue(DecidePredictive(*churn_, 0.5, *data_, OutcomeDirection::kLowerIsBetter).Actions(), *data_));
    EXPECT_GE(best, OracleValue(DecidePrescriptive(*ite_, *data_, OutcomeDirection::kHigherIsBetter).Actions(), *data_));
  }
}

TEST(DecidePredictive, Boundaries) {
  auto d = SampleDataset(BuildScm(FourSegmentPreset()), 500, 1);
  LinearModel m = LinearModel::Zero(d.feature_count);
  m.weights[0] = 2.0;
  EXPECT_EQ(DecidePredictive(m, 1.0, d, OutcomeDirection::kLowerIsBetter).TreatedCount(), 0u);
  // Every unit outside cell 0 has risk exactly 0.5; strict comparison leaves
  // them untreated.
  auto batch = DecidePredictive(m, 0.5, d, OutcomeDirection::kLowerIsBetter);
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(batch.decisions[i].action, d.records[i].features[0] == 1.0 ? 1 : 0);
  }
  EXPECT_THROW(DecidePredictive(m, 1.5, d, OutcomeDirection::kLowerIsBetter), Error);
  LinearModel wrong = LinearModel::Zero(2);
  try {
    DecidePredictive(wrong, 0.5, d, OutcomeDirection::kLowerIsBetter);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimensionMismatch);
  }
}

TEST(DecidePredictive, DirectionFlipsRisk) {
  LinearModel m = LinearModel::Zero(1);
  m.weights = {1.0};
  const std::vector<double> x = {2.0};
  EXPECT_NEAR(RiskScore(m, x, OutcomeDirection::kLowerIsBetter) +
                  RiskScore(m, x, OutcomeDirection::kHigherIsBetter),
              1.0, 1e-15);
}

TEST(DecidePrescriptive, ZeroEffectModelTreatsNoOne) {
  auto d = SampleDataset(BuildScm(FourSegmentPreset()), 300, 2);
  IteModel m;
  m.kind = MetaLearner::kT;
  m.feature_count = d.feature_count;
  m.mu0 = m.mu1 = LinearModel::Zero(d.feature_count);
  EXPECT_EQ(DecidePrescriptive(m, d, OutcomeDirection::kHigherIsBetter).TreatedCount(), 0u);
  EXPECT_EQ(DecidePrescriptive(m, d, OutcomeDirection::kLowerIsBetter).TreatedCount(), 0u);
}

TEST(DecideBudget, EndpointsAndTieBreak) {
  auto d = SampleDataset(BuildScm(FourSegmentPreset()), 101, 2);
  const std::vector<double> flat(d.size(), 0.3);
  EXPECT_EQ(DecideBudgetByScores(d, flat, 0.0, false).TreatedCount(), 0u);
  EXPECT_EQ(DecideBudgetByScores(d, flat, 1.0, false).TreatedCount(), d.size());
  auto ten = DecideBudgetByScores(d, flat, 0.1, false);
  EXPECT_EQ(ten.TreatedCount(), 10u);
  // Ties resolve to the lowest unit ids.
  for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(ten.decisions[i].action, i < 10 ? 1 : 0);
  const std::vector<double> negative(d.size(), -0.1);
  EXPECT_EQ(DecideBudgetByScores(d, negative, 1.0, true).TreatedCount(), 0u);
}

TEST(DecideBudget, RankInvarianceUnderMonotoneTransforms) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> normal;
  auto d = SampleDataset(BuildScm(FourSegmentPreset()), 1000, 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(d.size()), t1(d.size()), t2(d.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = std::round(normal(gen) * 4) / 4;  // coarse, so ties occur
      t1[i] = std::exp(s[i]);
      t2[i] = 3 * s[i] * s[i] * s[i] + s[i] - 7;
    }
    const double q = (trial % 10) / 10.0 + 0.05;
    const auto a = DecideBudgetByScores(d, s, q, false).Actions();
    EXPECT_EQ(a, DecideBudgetByScores(d, t1, q, false).Actions());
    EXPECT_EQ(a, DecideBudgetByScores(d, t2, q, false).Actions());
  }
}

TEST(CostAware, TreatsIffActionPaysForItself) {
  const std::vector<double> benefit = {0.3, 0.1, 0.05, -0.2};
  const auto s = CostAwareScores(benefit, 100.0, 8.0);
  const std::vector<std::uint64_t> ids = {0, 1, 2, 3};
  EXPECT_EQ(DecideTopFraction(ids, s, 1.0, true), (std::vector<int>{1, 1, 0, 0}));
}

TEST(OraclePolicy, PresetBehaviour) {
  auto null = SampleDataset(BuildScm(testing::NullConfig(0.4)), 500, 1);
  EXPECT_EQ(DecideOracle(null, OutcomeDirection::kHigherIsBetter).TreatedCount(), 0u);
  auto simpson = SampleDataset(BuildScm(SimpsonPreset()), 500, 1);
  EXPECT_EQ(DecideOracle(simpson, OutcomeDirection::kLowerIsBetter).TreatedCount(), simpson.size());
  auto scm = BuildScm(FourSegmentPreset());
  auto four = SampleDataset(scm, 2000, 1);
  EXPECT_EQ(TreatedIds(Ids(four), DecideOracle(four, OutcomeDirection::kHigherIsBetter).Actions()),
            CellUnits(four, scm, "persuadable"));
  try {
    OraclePolicy(four.AsLogged(), OutcomeDirection::kHigherIsBetter);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kMissingCounterfactuals);
  }
}

TEST(DecisionBatch, DeterministicAndCsvRoundTrip) {
  auto d = SampleDataset(BuildScm(FourSegmentPreset()), 400, 6);
  auto m = FitTLearner(d);
  Policy p{BudgetRule{m, 0.3, false}, OutcomeDirection::kHigherIsBetter, "budget-30"};
  auto a = Decide(p, d);
  EXPECT_EQ(a, Decide(p, d));
  std::stringstream csv;
  WriteDecisionsCsv(a, csv);
  EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "unit_id,score,action,policy_id,decided_at");
  auto back = ReadDecisionsCsv(csv);
  EXPECT_EQ(back, a);
}

TEST(PolicySpec, JsonRoundTrip) {
  PolicySpec s;
  s.kind = "budget";
  s.id = "b";
  s.direction = OutcomeDirection::kLowerIsBetter;
  s.target_fraction = 0.2;
  s.positive_only = true;
  s.model_path = "ite.json";
  EXPECT_EQ(PolicySpecFromJson(PolicySpecToJson(s)), s);
}

}  // namespace
}  // namespace prescriptive
