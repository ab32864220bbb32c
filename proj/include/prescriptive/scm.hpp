#pragma once

// Structural causal models with known potential outcomes, and the datasets
// sampled from them.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "prescriptive/common.hpp"
#include "prescriptive/random.hpp"

namespace prescriptive {

enum class ScmKind { kTabular, kLinear };
enum class AssignmentMode { kRct, kObservational };

struct CovariateCell {
  std::string name;
  double mass = 0.0;
  // Named discrete covariate values, e.g. {"segment", "persuadable"}.
  std::vector<std::pair<std::string, std::string>> covariates;
  double p_outcome_control = 0.0;
  double p_outcome_treated = 0.0;
  // Treat probability in observational mode; ignored under RCT.
  double propensity = 0.5;

  bool operator==(const CovariateCell&) const = default;
};

// Logistic propensity and outcome logits over standard-normal features.
// Control logit: outcome_coef.x + outcome_intercept.
// Treated logit: control logit + effect_coef.x + effect_intercept.
struct LinearSpec {
  std::size_t feature_count = 0;
  std::vector<double> propensity_coef;
  double propensity_intercept = 0.0;
  std::vector<double> outcome_coef;
  double outcome_intercept = 0.0;
  std::vector<double> effect_coef;
  double effect_intercept = 0.0;

  bool operator==(const LinearSpec&) const = default;
};

struct ScmConfig {
  ScmKind kind = ScmKind::kTabular;
  std::vector<CovariateCell> cells;
  LinearSpec linear;
  AssignmentMode mode = AssignmentMode::kRct;
  double p_treat = 0.5;
  OutcomeDirection outcome_direction = OutcomeDirection::kHigherIsBetter;
  std::size_t noise_feature_count = 0;
  // Permits observational propensities of exactly 0 or 1.
  bool allow_positivity_violation = false;

  bool operator==(const ScmConfig&) const = default;
};

struct UnitRecord {
  std::uint64_t unit_id = 0;
  std::vector<double> features;
  int treatment = 0;
  int outcome = 0;
  // Ground truth; only meaningful for synthetic_full datasets.
  double propensity_true = 0.0;
  int y0 = 0;
  int y1 = 0;
  double tau_true = 0.0;
  // Generating cell for tabular models, -1 otherwise.
  int cell = -1;

  bool operator==(const UnitRecord&) const = default;
};

enum class Provenance { kSyntheticFull, kObservationalLogged };

struct Dataset {
  std::vector<UnitRecord> records;
  Provenance provenance = Provenance::kSyntheticFull;
  std::size_t feature_count = 0;
  // The leading categorical_count feature columns are one-hot indicators that
  // define strata; the rest are continuous.
  std::size_t categorical_count = 0;

  bool operator==(const Dataset&) const = default;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }

  bool has_counterfactuals() const noexcept {
    return provenance == Provenance::kSyntheticFull;
  }

  Matrix FeatureMatrix() const {
    Matrix x(records.size(), feature_count);
    for (std::size_t i = 0; i < records.size(); ++i) {
      std::copy(records[i].features.begin(), records[i].features.end(),
                x.row(i).begin());
    }
    return x;
  }

  std::vector<double> Treatments() const {
    std::vector<double> t(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) t[i] = records[i].treatment;
    return t;
  }

  std::vector<double> Outcomes() const {
    std::vector<double> y(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) y[i] = records[i].outcome;
    return y;
  }

  std::vector<double> TrueEffects() const {
    RequireCounterfactuals();
    std::vector<double> tau(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) tau[i] = records[i].tau_true;
    return tau;
  }

  std::vector<double> TruePropensities() const {
    RequireCounterfactuals();
    std::vector<double> e(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
      e[i] = records[i].propensity_true;
    }
    return e;
  }

  std::size_t TreatedCount() const {
    return static_cast<std::size_t>(std::count_if(
        records.begin(), records.end(),
        [](const UnitRecord& r) { return r.treatment == 1; }));
  }

  void RequireBothArms() const {
    const std::size_t treated = TreatedCount();
    if (treated == 0 || treated == records.size()) {
      throw Error(ErrorCode::kSingleArmDataset,
                  "dataset needs both treated and control units");
    }
  }

  void RequireCounterfactuals() const {
    if (!has_counterfactuals()) {
      throw Error(ErrorCode::kMissingCounterfactuals,
                  "dataset is logged and carries no potential outcomes");
    }
  }

  // Checks shape and the strictly increasing unit_id invariant.
  void Validate() const {
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      if (r.features.size() != feature_count) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "record " + std::to_string(r.unit_id) + " has " +
                        std::to_string(r.features.size()) + " features, expected " +
                        std::to_string(feature_count));
      }
      if ((r.treatment != 0 && r.treatment != 1) ||
          (r.outcome != 0 && r.outcome != 1)) {
        throw Error(ErrorCode::kInvalidArgument, "treatment and outcome must be 0/1");
      }
      if (i > 0 && r.unit_id <= records[i - 1].unit_id) {
        throw Error(ErrorCode::kDuplicateUnitIds,
                    "unit_id must be unique and strictly increasing (at " +
                        std::to_string(r.unit_id) + ")");
      }
    }
    if (categorical_count > feature_count) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "categorical_count exceeds feature_count");
    }
  }

  // Copy without ground truth, as it would arrive from a production log.
  Dataset AsLogged() const {
    Dataset out = *this;
    out.provenance = Provenance::kObservationalLogged;
    for (auto& r : out.records) {
      r.propensity_true = 0.0;
      r.y0 = r.y1 = 0;
      r.tau_true = 0.0;
      r.cell = -1;
    }
    return out;
  }
};

namespace detail {

inline bool IsProbability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

inline bool IsOpenProbability(double p) { return std::isfinite(p) && p > 0.0 && p < 1.0; }

inline void CheckConfig(const ScmConfig& config) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kInvalidConfig, m); };
  if (config.mode == AssignmentMode::kRct && !IsOpenProbability(config.p_treat)) {
    fail("RCT p_treat must lie in (0, 1)");
  }
  if (config.kind == ScmKind::kTabular) {
    if (config.cells.empty()) fail("tabular model needs at least one cell");
    double total = 0.0;
    for (const auto& cell : config.cells) {
      if (!IsProbability(cell.mass)) fail("cell '" + cell.name + "' mass out of [0,1]");
      if (!IsProbability(cell.p_outcome_control) ||
          !IsProbability(cell.p_outcome_treated)) {
        fail("cell '" + cell.name + "' outcome probability out of [0,1]");
      }
      if (config.mode == AssignmentMode::kObservational) {
        const bool ok = config.allow_positivity_violation
                            ? IsProbability(cell.propensity)
                            : IsOpenProbability(cell.propensity);
        if (!ok) fail("cell '" + cell.name + "' propensity violates positivity");
      }
      total += cell.mass;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      fail("cell masses sum to " + FormatDouble(total) + ", expected 1");
    }
    const auto& first = config.cells.front().covariates;
    for (const auto& cell : config.cells) {
      if (cell.covariates.size() != first.size()) {
        fail("all cells must declare the same covariates");
      }
      for (std::size_t k = 0; k < first.size(); ++k) {
        if (cell.covariates[k].first != first[k].first) {
          fail("all cells must declare the same covariates in the same order");
        }
      }
    }
  } else {
    const auto& lin = config.linear;
    if (lin.feature_count == 0) fail("linear model needs feature_count >= 1");
    auto check_len = [&](const std::vector<double>& v, const char* what) {
      if (v.size() != lin.feature_count) {
        fail(std::string(what) + " must have feature_count entries");
      }
      for (double c : v) {
        if (!std::isfinite(c)) fail(std::string(what) + " must be finite");
      }
    };
    check_len(lin.outcome_coef, "outcome_coef");
    check_len(lin.effect_coef, "effect_coef");
    if (config.mode == AssignmentMode::kObservational) {
      check_len(lin.propensity_coef, "propensity_coef");
    }
  }
}

}  // namespace detail

// Validated, immutable structural causal model.
class Scm {
 public:
  explicit Scm(ScmConfig config) : config_(std::move(config)) {
    detail::CheckConfig(config_);
    if (config_.kind == ScmKind::kTabular) BuildCategoricalLayout();
  }

  const ScmConfig& config() const noexcept { return config_; }
  ScmKind kind() const noexcept { return config_.kind; }
  OutcomeDirection outcome_direction() const noexcept { return config_.outcome_direction; }

  std::size_t categorical_count() const noexcept { return feature_names_.size(); }

  std::size_t feature_count() const noexcept {
    const std::size_t base = config_.kind == ScmKind::kTabular
                                 ? categorical_count()
                                 : config_.linear.feature_count;
    return base + config_.noise_feature_count;
  }

  std::vector<std::string> FeatureNames() const {
    std::vector<std::string> names;
    if (config_.kind == ScmKind::kTabular) {
      names = feature_names_;
    } else {
      for (std::size_t j = 0; j < config_.linear.feature_count; ++j) {
        names.push_back("z" + std::to_string(j));
      }
    }
    for (std::size_t j = 0; j < config_.noise_feature_count; ++j) {
      names.push_back("noise" + std::to_string(j));
    }
    return names;
  }

  std::size_t cell_count() const noexcept { return config_.cells.size(); }

  std::size_t CellIndex(const std::string& name) const {
    for (std::size_t c = 0; c < config_.cells.size(); ++c) {
      if (config_.cells[c].name == name) return c;
    }
    throw Error(ErrorCode::kUnknownCell, "no cell named '" + name + "'");
  }

  // One-hot encoding of a cell's covariates.
  const std::vector<double>& CellFeatures(std::size_t cell) const {
    RequireTabular("CellFeatures");
    if (cell >= cell_features_.size()) {
      throw Error(ErrorCode::kUnknownCell, "cell index " + std::to_string(cell));
    }
    return cell_features_[cell];
  }

  // Matches the categorical prefix of a feature vector to a cell.
  std::size_t CellForFeatures(std::span<const double> x) const {
    RequireTabular("CellForFeatures");
    if (x.size() < categorical_count()) {
      throw Error(ErrorCode::kDimensionMismatch, "feature vector too short");
    }
    for (std::size_t c = 0; c < cell_features_.size(); ++c) {
      if (std::equal(cell_features_[c].begin(), cell_features_[c].end(), x.begin())) {
        return c;
      }
    }
    throw Error(ErrorCode::kUnknownCell, "features match no cell");
  }

  double Propensity(std::size_t cell) const {
    if (config_.mode == AssignmentMode::kRct) return config_.p_treat;
    return config_.cells.at(cell).propensity;
  }

  // P(Y=1 | x, do(T=t)).
  double OutcomeProbability(std::span<const double> x, int treatment) const {
    if (config_.kind == ScmKind::kTabular) {
      const auto& cell = config_.cells[CellForFeatures(x)];
      return treatment == 1 ? cell.p_outcome_treated : cell.p_outcome_control;
    }
    const auto& lin = config_.linear;
    if (x.size() < lin.feature_count) {
      throw Error(ErrorCode::kDimensionMismatch, "feature vector too short");
    }
    const auto z = x.first(lin.feature_count);
    double logit = Dot(lin.outcome_coef, z) + lin.outcome_intercept;
    if (treatment == 1) logit += Dot(lin.effect_coef, z) + lin.effect_intercept;
    return Sigmoid(logit);
  }

  double PropensityForFeatures(std::span<const double> x) const {
    if (config_.mode == AssignmentMode::kRct) return config_.p_treat;
    if (config_.kind == ScmKind::kTabular) return Propensity(CellForFeatures(x));
    const auto& lin = config_.linear;
    return Sigmoid(Dot(lin.propensity_coef, x.first(lin.feature_count)) +
                   lin.propensity_intercept);
  }

 private:
  void RequireTabular(const char* what) const {
    if (config_.kind != ScmKind::kTabular) {
      throw Error(ErrorCode::kUnsupportedKind, std::string(what) + " needs a tabular model");
    }
  }

  // One indicator column per distinct (covariate, value) pair in order of first
  // appearance; a model without covariates gets one column per cell.
  void BuildCategoricalLayout() {
    const auto& cells = config_.cells;
    std::vector<std::pair<std::string, std::string>> levels;
    if (cells.front().covariates.empty()) {
      for (const auto& cell : cells) levels.emplace_back("cell", cell.name);
    } else {
      const std::size_t ncov = cells.front().covariates.size();
      for (std::size_t k = 0; k < ncov; ++k) {
        for (const auto& cell : cells) {
          const auto& level = cell.covariates[k];
          if (std::find(levels.begin(), levels.end(), level) == levels.end()) {
            levels.push_back(level);
          }
        }
      }
    }
    for (const auto& [name, value] : levels) feature_names_.push_back(name + "=" + value);
    for (std::size_t c = 0; c < cells.size(); ++c) {
      std::vector<double> onehot(levels.size(), 0.0);
      for (std::size_t j = 0; j < levels.size(); ++j) {
        const bool hit =
            cells.front().covariates.empty()
                ? j == c
                : std::find(cells[c].covariates.begin(), cells[c].covariates.end(),
                            levels[j]) != cells[c].covariates.end();
        onehot[j] = hit ? 1.0 : 0.0;
      }
      cell_features_.push_back(std::move(onehot));
    }
  }

  ScmConfig config_;
  std::vector<std::string> feature_names_;
  std::vector<std::vector<double>> cell_features_;
};

inline Scm BuildScm(ScmConfig config) { return Scm(std::move(config)); }

// Draws n units. Per unit, in order: cell (tabular) or base features (linear),
// noise features, treatment, then one shared uniform for both potential
// outcomes so that y1 = [u < p1] and y0 = [u < p0].
inline Dataset SampleDataset(const Scm& scm, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "n must be >= 1");
  const auto& config = scm.config();
  Rng rng(seed);
  Dataset data;
  data.provenance = Provenance::kSyntheticFull;
  data.feature_count = scm.feature_count();
  data.categorical_count = scm.categorical_count();
  data.records.reserve(n);

  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& cell : config.cells) cumulative.push_back(acc += cell.mass);

  for (std::size_t i = 0; i < n; ++i) {
    UnitRecord r;
    r.unit_id = i;
    r.features.reserve(data.feature_count);
    double p0 = 0.0;
    double p1 = 0.0;
    double e = config.p_treat;
    if (config.kind == ScmKind::kTabular) {
      const double u = rng.Uniform();
      std::size_t c = 0;
      while (c + 1 < cumulative.size() && u >= cumulative[c]) ++c;
      r.cell = static_cast<int>(c);
      const auto& onehot = scm.CellFeatures(c);
      r.features.assign(onehot.begin(), onehot.end());
      for (std::size_t j = 0; j < config.noise_feature_count; ++j) {
        r.features.push_back(rng.Normal());
      }
      p0 = config.cells[c].p_outcome_control;
      p1 = config.cells[c].p_outcome_treated;
      e = scm.Propensity(c);
    } else {
      const std::size_t total = config.linear.feature_count + config.noise_feature_count;
      for (std::size_t j = 0; j < total; ++j) r.features.push_back(rng.Normal());
      p0 = scm.OutcomeProbability(r.features, 0);
      p1 = scm.OutcomeProbability(r.features, 1);
      e = scm.PropensityForFeatures(r.features);
    }
    r.propensity_true = e;
    r.treatment = rng.Bernoulli(e) ? 1 : 0;
    const double u = rng.Uniform();
    r.y1 = u < p1 ? 1 : 0;
    r.y0 = u < p0 ? 1 : 0;
    r.outcome = r.treatment == 1 ? r.y1 : r.y0;
    r.tau_true = p1 - p0;
    data.records.push_back(std::move(r));
  }
  return data;
}

// Exact average effect: sum over cells of mass * (p1 - p0).
inline double TrueAte(const Scm& scm) {
  if (scm.kind() != ScmKind::kTabular) {
    throw Error(ErrorCode::kUnsupportedKind,
                "exact ATE needs a tabular model; use MonteCarloAte");
  }
  double ate = 0.0;
  for (const auto& cell : scm.config().cells) {
    ate += cell.mass * (cell.p_outcome_treated - cell.p_outcome_control);
  }
  return ate;
}

inline double TrueIte(const Scm& scm, std::size_t cell) {
  if (scm.kind() != ScmKind::kTabular) {
    throw Error(ErrorCode::kUnsupportedKind, "cell lookup needs a tabular model");
  }
  if (cell >= scm.cell_count()) {
    throw Error(ErrorCode::kUnknownCell, "cell index " + std::to_string(cell));
  }
  const auto& c = scm.config().cells[cell];
  return c.p_outcome_treated - c.p_outcome_control;
}

inline double TrueIte(const Scm& scm, const std::string& cell_name) {
  return TrueIte(scm, scm.CellIndex(cell_name));
}

inline double TrueIte(const Scm& scm, std::span<const double> features) {
  return scm.OutcomeProbability(features, 1) - scm.OutcomeProbability(features, 0);
}

// Average of exact per-unit effects over freshly drawn covariates.
inline double MonteCarloAte(const Scm& scm, std::size_t samples, std::uint64_t seed) {
  const Dataset d = SampleDataset(scm, samples, seed);
  double sum = 0.0;
  for (const auto& r : d.records) sum += r.tau_true;
  return sum / static_cast<double>(samples);
}

// Exact E[Y | T=1] - E[Y | T=0] under the model's own assignment mechanism.
inline double ExactNaiveContrast(const Scm& scm) {
  if (scm.kind() != ScmKind::kTabular) {
    throw Error(ErrorCode::kUnsupportedKind, "exact contrast needs a tabular model");
  }
  double treated_mass = 0.0, treated_outcome = 0.0;
  double control_mass = 0.0, control_outcome = 0.0;
  const auto& cells = scm.config().cells;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const double e = scm.Propensity(c);
    treated_mass += cells[c].mass * e;
    treated_outcome += cells[c].mass * e * cells[c].p_outcome_treated;
    control_mass += cells[c].mass * (1.0 - e);
    control_outcome += cells[c].mass * (1.0 - e) * cells[c].p_outcome_control;
  }
  return treated_outcome / treated_mass - control_outcome / control_mass;
}

// Engagement confounds targeting and churn: at-risk (disengaged) customers are
// targeted more often, and targeting lowers churn by 5 points in both strata.
inline ScmConfig SimpsonPreset() {
  ScmConfig config;
  config.kind = ScmKind::kTabular;
  config.mode = AssignmentMode::kObservational;
  config.outcome_direction = OutcomeDirection::kLowerIsBetter;
  config.cells = {
      {"engaged", 0.5, {{"engagement", "high"}}, 0.10, 0.05, 0.2},
      {"disengaged", 0.5, {{"engagement", "low"}}, 0.60, 0.55, 0.8},
  };
  return config;
}

// Retention outcome over the four classic response segments, randomized.
inline ScmConfig FourSegmentPreset() {
  ScmConfig config;
  config.kind = ScmKind::kTabular;
  config.mode = AssignmentMode::kRct;
  config.p_treat = 0.5;
  config.outcome_direction = OutcomeDirection::kHigherIsBetter;
  config.noise_feature_count = 2;
  config.cells = {
      {"persuadable", 0.25, {{"segment", "persuadable"}}, 0.4, 0.7, 0.5},
      {"sure_thing", 0.25, {{"segment", "sure_thing"}}, 0.9, 0.9, 0.5},
      {"lost_cause", 0.25, {{"segment", "lost_cause"}}, 0.1, 0.1, 0.5},
      {"sleeping_dog", 0.25, {{"segment", "sleeping_dog"}}, 0.8, 0.5, 0.5},
  };
  return config;
}

}  // namespace prescriptive
