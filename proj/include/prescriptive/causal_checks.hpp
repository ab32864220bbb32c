#pragma once

// Data-level diagnostics for the identification assumptions: overlap
// (positivity), covariate balance, and consistency of observed outcomes.
// Absence of hidden confounding cannot be checked from data.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prescriptive/common.hpp"
#include "prescriptive/learners.hpp"
#include "prescriptive/scm.hpp"

namespace prescriptive {

enum class Verdict { kPass, kWarn, kFail };

inline const char* VerdictName(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "pass";
    case Verdict::kWarn: return "warn";
    case Verdict::kFail: return "fail";
  }
  return "?";
}

struct StratumCounts {
  std::vector<double> key;  // values of the categorical columns
  std::size_t treated = 0;
  std::size_t control = 0;
};

struct PositivityReport {
  double min_propensity = 0.0;
  double max_propensity = 0.0;
  double fraction_below_eps = 0.0;
  double fraction_above_one_minus_eps = 0.0;
  double eps = 0.05;
  double fail_threshold = 0.02;
  std::vector<StratumCounts> per_cell_arm_counts;
  Verdict verdict = Verdict::kPass;
};

// Strata are the distinct patterns of the dataset's categorical columns, in
// order of first appearance. Continuous columns are not stratified.
inline std::vector<StratumCounts> ArmCountsByStratum(const Dataset& data) {
  std::vector<StratumCounts> strata;
  std::map<std::vector<double>, std::size_t> index;
  for (const auto& r : data.records) {
    std::vector<double> key(r.features.begin(),
                            r.features.begin() + static_cast<std::ptrdiff_t>(data.categorical_count));
    auto [it, inserted] = index.try_emplace(key, strata.size());
    if (inserted) strata.push_back({std::move(key), 0, 0});
    auto& s = strata[it->second];
    (r.treatment == 1 ? s.treated : s.control) += 1;
  }
  return strata;
}

// Verdict: fail when any stratum lacks an arm or the extreme-propensity mass
// exceeds fail_threshold; warn when some but not too much mass is extreme.
inline PositivityReport PositivityReportFromPropensities(const Dataset& data,
                                                         std::span<const double> propensities,
                                                         double eps = 0.05,
                                                         double fail_threshold = 0.02) {
  if (propensities.size() != data.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one propensity per unit required");
  }
  if (!(eps >= 0.0 && eps < 0.5)) {
    throw Error(ErrorCode::kInvalidArgument, "eps must lie in [0, 0.5)");
  }
  PositivityReport report;
  report.eps = eps;
  report.fail_threshold = fail_threshold;
  if (!propensities.empty()) {
    const auto [lo, hi] = std::minmax_element(propensities.begin(), propensities.end());
    report.min_propensity = *lo;
    report.max_propensity = *hi;
    std::size_t below = 0, above = 0;
    for (double e : propensities) {
      below += e < eps ? 1 : 0;
      above += e > 1.0 - eps ? 1 : 0;
    }
    const double n = static_cast<double>(propensities.size());
    report.fraction_below_eps = below / n;
    report.fraction_above_one_minus_eps = above / n;
  }
  report.per_cell_arm_counts = ArmCountsByStratum(data);
  const bool empty_arm = std::any_of(
      report.per_cell_arm_counts.begin(), report.per_cell_arm_counts.end(),
      [](const StratumCounts& s) { return s.treated == 0 || s.control == 0; });
  const double extreme = report.fraction_below_eps + report.fraction_above_one_minus_eps;
  if (empty_arm || extreme > fail_threshold) {
    report.verdict = Verdict::kFail;
  } else if (extreme > 0.0) {
    report.verdict = Verdict::kWarn;
  } else {
    report.verdict = Verdict::kPass;
  }
  return report;
}

// Uses the model's unclipped predictions so that extreme estimates show up.
inline PositivityReport MakePositivityReport(const Dataset& data, const PropensityModel& model,
                                             double eps = 0.05, double fail_threshold = 0.02) {
  const auto e = model.PredictAllRaw(data);
  return PositivityReportFromPropensities(data, e, eps, fail_threshold);
}

struct FeatureBalance {
  double smd_unweighted = 0.0;
  std::optional<double> smd_weighted;
};

struct BalanceReport {
  std::vector<FeatureBalance> features;
  double max_abs_smd_unweighted = 0.0;
  std::optional<double> max_abs_smd_weighted;
};

namespace detail {

struct ArmMoments {
  double mean = 0.0;
  double var = 0.0;
};

inline ArmMoments WeightedMoments(const Dataset& data, std::size_t feature, int arm,
                                  std::span<const double> weights) {
  double sw = 0.0, sx = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.records[i].treatment != arm) continue;
    const double w = weights.empty() ? 1.0 : weights[i];
    sw += w;
    sx += w * data.records[i].features[feature];
  }
  ArmMoments m;
  m.mean = sx / sw;
  double sv = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.records[i].treatment != arm) continue;
    const double w = weights.empty() ? 1.0 : weights[i];
    const double dx = data.records[i].features[feature] - m.mean;
    sv += w * dx * dx;
  }
  m.var = sv / sw;
  return m;
}

// (mean_t - mean_c) / sqrt((var_t + var_c) / 2). Zero pooled variance gives 0
// when the means agree and +inf otherwise.
inline double StandardizedMeanDifference(const ArmMoments& t, const ArmMoments& c) {
  const double pooled = std::sqrt((t.var + c.var) / 2.0);
  const double diff = t.mean - c.mean;
  if (pooled == 0.0) return diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return diff / pooled;
}

}  // namespace detail

// Both arms use the same normalization: weights are divided by their per-arm
// sum for means and (population) variances.
inline BalanceReport MakeBalanceReport(const Dataset& data,
                                       std::span<const double> weights = {}) {
  data.RequireBothArms();
  if (!weights.empty()) {
    if (weights.size() != data.size()) {
      throw Error(ErrorCode::kLengthMismatch, "one weight per unit required");
    }
    double wt = 0.0, wc = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
        throw Error(ErrorCode::kInvalidArgument, "weights must be finite and non-negative");
      }
      (data.records[i].treatment == 1 ? wt : wc) += weights[i];
    }
    if (wt == 0.0 || wc == 0.0) {
      throw Error(ErrorCode::kInvalidArgument, "weights are all zero in one arm");
    }
  }
  BalanceReport report;
  for (std::size_t f = 0; f < data.feature_count; ++f) {
    FeatureBalance fb;
    fb.smd_unweighted = detail::StandardizedMeanDifference(
        detail::WeightedMoments(data, f, 1, {}), detail::WeightedMoments(data, f, 0, {}));
    report.max_abs_smd_unweighted =
        std::max(report.max_abs_smd_unweighted, std::abs(fb.smd_unweighted));
    if (!weights.empty()) {
      fb.smd_weighted = detail::StandardizedMeanDifference(
          detail::WeightedMoments(data, f, 1, weights),
          detail::WeightedMoments(data, f, 0, weights));
      report.max_abs_smd_weighted =
          std::max(report.max_abs_smd_weighted.value_or(0.0), std::abs(*fb.smd_weighted));
    }
    report.features.push_back(fb);
  }
  return report;
}

// 1/e for treated units, 1/(1-e) for controls.
inline std::vector<double> InverseProbabilityWeights(const Dataset& data,
                                                     std::span<const double> propensities) {
  if (propensities.size() != data.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one propensity per unit required");
  }
  std::vector<double> w(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double e = propensities[i];
    if (!(e > 0.0 && e < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "propensities must lie in (0, 1)");
    }
    w[i] = data.records[i].treatment == 1 ? 1.0 / e : 1.0 / (1.0 - e);
  }
  return w;
}

// True iff every observed outcome equals the potential outcome of the
// received treatment.
inline bool ConsistencyCheck(const Dataset& data) {
  data.RequireCounterfactuals();
  return std::all_of(data.records.begin(), data.records.end(), [](const UnitRecord& r) {
    return r.outcome == (r.treatment == 1 ? r.y1 : r.y0);
  });
}

inline nlohmann::json ToJson(const PositivityReport& r) {
  nlohmann::json strata = nlohmann::json::array();
  for (const auto& s : r.per_cell_arm_counts) {
    strata.push_back({{"stratum", s.key}, {"treated", s.treated}, {"control", s.control}});
  }
  return {{"min_propensity", r.min_propensity},
          {"max_propensity", r.max_propensity},
          {"fraction_below_eps", r.fraction_below_eps},
          {"fraction_above_one_minus_eps", r.fraction_above_one_minus_eps},
          {"eps", r.eps},
          {"fail_threshold", r.fail_threshold},
          {"per_cell_arm_counts", strata},
          {"verdict", VerdictName(r.verdict)}};
}

namespace detail {
// JSON has no infinity; the sentinel is written as the string "inf".
inline nlohmann::json SmdJson(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}
}  // namespace detail

inline nlohmann::json ToJson(const BalanceReport& r) {
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t f = 0; f < r.features.size(); ++f) {
    nlohmann::json entry = {{"feature", "x" + std::to_string(f)},
                            {"smd_unweighted", detail::SmdJson(r.features[f].smd_unweighted)}};
    if (r.features[f].smd_weighted) {
      entry["smd_weighted"] = detail::SmdJson(*r.features[f].smd_weighted);
    }
    features.push_back(entry);
  }
  nlohmann::json j = {{"features", features},
                      {"max_abs_smd_unweighted", detail::SmdJson(r.max_abs_smd_unweighted)}};
  if (r.max_abs_smd_weighted) {
    j["max_abs_smd_weighted"] = detail::SmdJson(*r.max_abs_smd_weighted);
  }
  return j;
}

}  // namespace prescriptive
