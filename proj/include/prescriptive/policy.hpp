#pragma once

// Deterministic targeting policies. Predictive policies threshold estimated
// risk; prescriptive policies threshold estimated benefit of acting; budget
// policies treat the top fraction of units ranked by benefit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "prescriptive/common.hpp"
#include "prescriptive/learners.hpp"
#include "prescriptive/scm.hpp"
#include "prescriptive/scm_io.hpp"
#include "prescriptive/uplift.hpp"

namespace prescriptive {

inline constexpr const char* kDefaultDecidedAt = "1970-01-01T00:00:00Z";

struct Decision {
  std::uint64_t unit_id = 0;
  double score = 0.0;
  int action = 0;
  std::string policy_id;
  std::string decided_at;

  bool operator==(const Decision&) const = default;
};

struct DecisionBatch {
  std::vector<Decision> decisions;

  std::size_t size() const noexcept { return decisions.size(); }

  std::vector<int> Actions() const {
    std::vector<int> a(decisions.size());
    for (std::size_t i = 0; i < decisions.size(); ++i) a[i] = decisions[i].action;
    return a;
  }

  std::size_t TreatedCount() const {
    return static_cast<std::size_t>(std::count_if(
        decisions.begin(), decisions.end(), [](const Decision& d) { return d.action == 1; }));
  }

  bool operator==(const DecisionBatch&) const = default;
};

// Risk of the bad outcome: y_hat when lower is better (churn), 1 - y_hat when
// higher is better (retention).
inline double RiskScore(const LinearModel& outcome_model, std::span<const double> x,
                        OutcomeDirection direction) {
  const double p = PredictProba(outcome_model, x);
  return direction == OutcomeDirection::kLowerIsBetter ? p : 1.0 - p;
}

// Benefit of acting: tau when higher is better, -tau otherwise.
inline double Benefit(double tau, OutcomeDirection direction) {
  return DirectionSign(direction) * tau;
}

// Cost-aware score: benefit * unit_value - action_cost. Feeding these into
// DecideTopFraction with positive_only treats iff the action pays for itself.
inline std::vector<double> CostAwareScores(std::span<const double> benefits, double unit_value,
                                           double action_cost) {
  std::vector<double> s(benefits.size());
  for (std::size_t i = 0; i < benefits.size(); ++i) s[i] = benefits[i] * unit_value - action_cost;
  return s;
}

// Units sorted by score descending, ties by unit_id ascending.
inline std::vector<std::size_t> RankByScore(std::span<const std::uint64_t> unit_ids,
                                            std::span<const double> scores) {
  if (unit_ids.size() != scores.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one score per unit required");
  }
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return unit_ids[a] < unit_ids[b];
  });
  return order;
}

// floor(q * n) with a guard against q*n landing a hair under an integer.
inline std::size_t TopCount(double fraction, std::size_t n) {
  const double k = std::floor(fraction * static_cast<double>(n) + 1e-9);
  return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(n)));
}

// Treats the top floor(q*N) units; with positive_only, also requires score > 0.
inline std::vector<int> DecideTopFraction(std::span<const std::uint64_t> unit_ids,
                                          std::span<const double> scores, double fraction,
                                          bool positive_only) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "target fraction must lie in [0, 1]");
  }
  const auto order = RankByScore(unit_ids, scores);
  const std::size_t k = TopCount(fraction, scores.size());
  std::vector<int> actions(scores.size(), 0);
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t i = order[r];
    if (positive_only && !(scores[i] > 0.0)) break;
    actions[i] = 1;
  }
  return actions;
}

struct PredictiveRule {
  LinearModel outcome_model;
  double threshold = 0.5;
};

struct PrescriptiveRule {
  IteModel ite_model;
  double threshold = 0.0;
};

struct BudgetRule {
  IteModel ite_model;
  double target_fraction = 0.0;
  bool positive_only = false;
};

// Acts on the true effect; needs a dataset with ground truth.
struct OracleRule {};

struct ConstantRule {
  int action = 0;
};

struct Policy {
  std::variant<PredictiveRule, PrescriptiveRule, BudgetRule, OracleRule, ConstantRule> rule;
  OutcomeDirection direction = OutcomeDirection::kHigherIsBetter;
  std::string id = "policy";
};

namespace detail {

inline std::vector<std::uint64_t> UnitIds(const Dataset& data) {
  std::vector<std::uint64_t> ids(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) ids[i] = data.records[i].unit_id;
  return ids;
}

inline DecisionBatch MakeBatch(const Dataset& data, std::span<const double> scores,
                               std::span<const int> actions, const std::string& policy_id,
                               const std::string& decided_at) {
  DecisionBatch batch;
  batch.decisions.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    batch.decisions.push_back(
        {data.records[i].unit_id, scores[i], actions[i], policy_id, decided_at});
  }
  return batch;
}

inline std::vector<double> Benefits(const IteModel& model, const Dataset& data,
                                    OutcomeDirection direction) {
  std::vector<double> b(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    b[i] = Benefit(PredictIte(model, data.records[i].features), direction);
  }
  return b;
}

}  // namespace detail

// action = 1 iff risk(x) > t (strict).
inline DecisionBatch DecidePredictive(const LinearModel& outcome_model, double threshold,
                                      const Dataset& data, OutcomeDirection direction,
                                      const std::string& policy_id = "predictive",
                                      const std::string& decided_at = kDefaultDecidedAt) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "risk threshold must lie in [0, 1]");
  }
  std::vector<double> scores(data.size());
  std::vector<int> actions(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    scores[i] = RiskScore(outcome_model, data.records[i].features, direction);
    actions[i] = scores[i] > threshold ? 1 : 0;
  }
  return detail::MakeBatch(data, scores, actions, policy_id, decided_at);
}

// action = 1 iff benefit(x) > threshold (strict).
inline DecisionBatch DecidePrescriptive(const IteModel& ite_model, const Dataset& data,
                                        OutcomeDirection direction, double threshold = 0.0,
                                        const std::string& policy_id = "prescriptive",
                                        const std::string& decided_at = kDefaultDecidedAt) {
  const auto scores = detail::Benefits(ite_model, data, direction);
  std::vector<int> actions(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) actions[i] = scores[i] > threshold ? 1 : 0;
  return detail::MakeBatch(data, scores, actions, policy_id, decided_at);
}

inline DecisionBatch DecideBudget(const IteModel& ite_model, const Dataset& data,
                                  double target_fraction, bool positive_only,
                                  OutcomeDirection direction,
                                  const std::string& policy_id = "budget",
                                  const std::string& decided_at = kDefaultDecidedAt) {
  const auto scores = detail::Benefits(ite_model, data, direction);
  const auto ids = detail::UnitIds(data);
  const auto actions = DecideTopFraction(ids, scores, target_fraction, positive_only);
  return detail::MakeBatch(data, scores, actions, policy_id, decided_at);
}

// Budget selection on precomputed scores (risk, oracle benefit, cost-aware...).
inline DecisionBatch DecideBudgetByScores(const Dataset& data, std::span<const double> scores,
                                          double target_fraction, bool positive_only,
                                          const std::string& policy_id = "budget",
                                          const std::string& decided_at = kDefaultDecidedAt) {
  if (scores.size() != data.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one score per unit required");
  }
  const auto ids = detail::UnitIds(data);
  const auto actions = DecideTopFraction(ids, scores, target_fraction, positive_only);
  return detail::MakeBatch(data, scores, actions, policy_id, decided_at);
}

// Treat iff the true benefit is positive: the per-unit optimum for binary
// actions without costs.
inline DecisionBatch DecideOracle(const Dataset& data, OutcomeDirection direction,
                                  const std::string& policy_id = "oracle",
                                  const std::string& decided_at = kDefaultDecidedAt) {
  data.RequireCounterfactuals();
  std::vector<double> scores(data.size());
  std::vector<int> actions(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    scores[i] = Benefit(data.records[i].tau_true, direction);
    actions[i] = scores[i] > 0.0 ? 1 : 0;
  }
  return detail::MakeBatch(data, scores, actions, policy_id, decided_at);
}

inline Policy OraclePolicy(const Dataset& data, OutcomeDirection direction) {
  data.RequireCounterfactuals();
  return Policy{OracleRule{}, direction, "oracle"};
}

inline DecisionBatch Decide(const Policy& policy, const Dataset& data,
                            const std::string& decided_at = kDefaultDecidedAt) {
  return std::visit(
      [&](const auto& rule) -> DecisionBatch {
        using Rule = std::decay_t<decltype(rule)>;
        if constexpr (std::is_same_v<Rule, PredictiveRule>) {
          return DecidePredictive(rule.outcome_model, rule.threshold, data, policy.direction,
                                  policy.id, decided_at);
        } else if constexpr (std::is_same_v<Rule, PrescriptiveRule>) {
          return DecidePrescriptive(rule.ite_model, data, policy.direction, rule.threshold,
                                    policy.id, decided_at);
        } else if constexpr (std::is_same_v<Rule, BudgetRule>) {
          return DecideBudget(rule.ite_model, data, rule.target_fraction, rule.positive_only,
                              policy.direction, policy.id, decided_at);
        } else if constexpr (std::is_same_v<Rule, OracleRule>) {
          return DecideOracle(data, policy.direction, policy.id, decided_at);
        } else {
          std::vector<double> scores(data.size(), 0.0);
          std::vector<int> actions(data.size(), rule.action);
          return detail::MakeBatch(data, scores, actions, policy.id, decided_at);
        }
      },
      policy.rule);
}

// Serializable description of a policy; models are referenced, not embedded.
struct PolicySpec {
  std::string kind = "prescriptive";  // predictive|prescriptive|budget|oracle|constant
  std::string id = "policy";
  OutcomeDirection direction = OutcomeDirection::kHigherIsBetter;
  double threshold = 0.0;
  double target_fraction = 1.0;
  bool positive_only = false;
  int action = 0;  // constant policies only
  std::string model_path;

  bool operator==(const PolicySpec&) const = default;
};

inline nlohmann::json PolicySpecToJson(const PolicySpec& s) {
  return {{"kind", s.kind},
          {"id", s.id},
          {"direction", DirectionName(s.direction)},
          {"threshold", s.threshold},
          {"target_fraction", s.target_fraction},
          {"positive_only", s.positive_only},
          {"action", s.action},
          {"model_path", s.model_path}};
}

inline PolicySpec PolicySpecFromJson(const nlohmann::json& j) {
  try {
    PolicySpec s;
    s.kind = j.at("kind").get<std::string>();
    s.id = j.value("id", s.kind);
    s.direction = ParseDirection(j.value("direction", std::string("higher_is_better")));
    s.threshold = j.value("threshold", 0.0);
    s.target_fraction = j.value("target_fraction", 1.0);
    s.positive_only = j.value("positive_only", false);
    s.action = j.value("action", 0);
    s.model_path = j.value("model_path", std::string());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("policy config: ") + e.what());
  }
}

inline void WriteDecisionsCsv(const DecisionBatch& batch, std::ostream& out) {
  out << "unit_id,score,action,policy_id,decided_at\n";
  for (const auto& d : batch.decisions) {
    out << d.unit_id << ',' << FormatDouble(d.score) << ',' << d.action << ',' << d.policy_id
        << ',' << d.decided_at << '\n';
  }
}

inline DecisionBatch ReadDecisionsCsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "unit_id,score,action,policy_id,decided_at") {
    throw Error(ErrorCode::kParse, "decision CSV header must be unit_id,score,action,policy_id,decided_at");
  }
  DecisionBatch batch;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::SplitCsvLine(line);
    if (f.size() != 5) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(lineno) + ": expected 5 fields");
    }
    Decision d;
    try {
      d.unit_id = std::stoull(f[0]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(lineno) + ": bad unit_id");
    }
    d.score = detail::ParseCsvDouble(f[1], lineno);
    d.action = detail::ParseCsvBit(f[2], lineno);
    d.policy_id = f[3];
    d.decided_at = f[4];
    batch.decisions.push_back(std::move(d));
  }
  return batch;
}

}  // namespace prescriptive
