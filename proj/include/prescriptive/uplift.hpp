#pragma once

// Average and individual treatment effect estimation: naive and
// inverse-propensity-weighted ATE, and S-/T-learner meta-learners over the
// logistic base learner.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prescriptive/common.hpp"
#include "prescriptive/learners.hpp"
#include "prescriptive/scm.hpp"

namespace prescriptive {

enum class AteMethod { kNaive, kIpw };

struct AteEstimate {
  double value = 0.0;
  AteMethod method = AteMethod::kNaive;
  std::size_t n_used = 0;
  double std_error = 0.0;
};

inline const char* AteMethodName(AteMethod m) { return m == AteMethod::kNaive ? "naive" : "ipw"; }

// mean(outcome | T=1) - mean(outcome | T=0).
inline AteEstimate AteNaive(const Dataset& data) {
  data.RequireBothArms();
  double r_t = 0.0, r_c = 0.0, n_t = 0.0, n_c = 0.0;
  for (const auto& r : data.records) {
    if (r.treatment == 1) {
      n_t += 1.0;
      r_t += r.outcome;
    } else {
      n_c += 1.0;
      r_c += r.outcome;
    }
  }
  const double m_t = r_t / n_t;
  const double m_c = r_c / n_c;
  AteEstimate est;
  est.value = r_t / n_t - r_c / n_c;
  est.method = AteMethod::kNaive;
  est.n_used = data.size();
  est.std_error = std::sqrt(m_t * (1.0 - m_t) / n_t + m_c * (1.0 - m_c) / n_c);
  return est;
}

// Horvitz-Thompson: (1/N) sum [T y / e - (1-T) y / (1-e)].
inline AteEstimate AteIpw(const Dataset& data, std::span<const double> propensities) {
  if (propensities.size() != data.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                std::to_string(propensities.size()) + " propensities for " +
                    std::to_string(data.size()) + " units");
  }
  if (data.empty()) throw Error(ErrorCode::kInvalidArgument, "empty dataset");
  std::vector<double> terms(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double e = propensities[i];
    if (!(e > 0.0 && e < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "propensities must lie in (0, 1); clip first");
    }
    const auto& r = data.records[i];
    terms[i] = r.treatment == 1 ? r.outcome / e : -r.outcome / (1.0 - e);
  }
  const double n = static_cast<double>(terms.size());
  double mean = 0.0;
  for (double t : terms) mean += t;
  mean /= n;
  double ss = 0.0;
  for (double t : terms) ss += (t - mean) * (t - mean);
  AteEstimate est;
  est.value = mean;
  est.method = AteMethod::kIpw;
  est.n_used = data.size();
  est.std_error = terms.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return est;
}

enum class MetaLearner { kT, kS };

// Estimated tau(x). The T-learner holds one outcome model per arm; the
// S-learner holds a single model over [x, t, t*x].
struct IteModel {
  MetaLearner kind = MetaLearner::kT;
  LinearModel mu1;  // T-learner treated-arm model
  LinearModel mu0;  // T-learner control-arm model
  LinearModel mu;   // S-learner joint model
  std::size_t feature_count = 0;

  bool operator==(const IteModel&) const = default;
};

namespace detail {

// S-learner design row: features, treatment indicator, treatment x features.
inline void SLearnerRow(std::span<const double> x, int t, std::span<double> out) {
  const std::size_t d = x.size();
  std::copy(x.begin(), x.end(), out.begin());
  out[d] = t;
  for (std::size_t j = 0; j < d; ++j) out[d + 1 + j] = t * x[j];
}

inline void CheckWeights(const Dataset& data, std::span<const double> sample_weights) {
  if (!sample_weights.empty() && sample_weights.size() != data.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one sample weight per unit required");
  }
}

}  // namespace detail

// Optional sample_weights (e.g. inverse propensity weights on observational
// data) are passed through to every component fit.
inline IteModel FitTLearner(const Dataset& data, const FitConfig& config = {},
                            std::span<const double> sample_weights = {}) {
  data.RequireBothArms();
  detail::CheckWeights(data, sample_weights);
  IteModel model;
  model.kind = MetaLearner::kT;
  model.feature_count = data.feature_count;
  model.mu1 = FitOutcomeModel(data, config, 1, sample_weights);
  model.mu0 = FitOutcomeModel(data, config, 0, sample_weights);
  return model;
}

inline IteModel FitSLearner(const Dataset& data, const FitConfig& config = {},
                            std::span<const double> sample_weights = {}) {
  data.RequireBothArms();
  detail::CheckWeights(data, sample_weights);
  const std::size_t d = data.feature_count;
  Matrix x(data.size(), 2 * d + 1);
  std::vector<double> y(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& r = data.records[i];
    detail::SLearnerRow(r.features, r.treatment, x.row(i));
    y[i] = r.outcome;
  }
  IteModel model;
  model.kind = MetaLearner::kS;
  model.feature_count = d;
  model.mu = FitLogistic(x, y, sample_weights, config);
  return model;
}

inline IteModel FitIteModel(MetaLearner kind, const Dataset& data, const FitConfig& config = {},
                            std::span<const double> sample_weights = {}) {
  return kind == MetaLearner::kT ? FitTLearner(data, config, sample_weights)
                                 : FitSLearner(data, config, sample_weights);
}

// Estimated P(Y=1 | x, do(T=t)).
inline double PredictOutcome(const IteModel& model, std::span<const double> x, int t) {
  if (x.size() != model.feature_count) {
    throw Error(ErrorCode::kDimensionMismatch,
                "model expects " + std::to_string(model.feature_count) + " features, got " +
                    std::to_string(x.size()));
  }
  if (model.kind == MetaLearner::kT) return PredictProba(t == 1 ? model.mu1 : model.mu0, x);
  std::vector<double> row(2 * x.size() + 1);
  detail::SLearnerRow(x, t, row);
  return PredictProba(model.mu, row);
}

// mu(x, 1) - mu(x, 0), clamped to [-1, 1].
inline double PredictIte(const IteModel& model, std::span<const double> x) {
  const double tau = PredictOutcome(model, x, 1) - PredictOutcome(model, x, 0);
  return std::clamp(tau, -1.0, 1.0);
}

inline std::vector<double> PredictIteAll(const IteModel& model, const Dataset& data) {
  std::vector<double> tau(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) tau[i] = PredictIte(model, data.records[i].features);
  return tau;
}

inline nlohmann::json IteModelToJson(const IteModel& m) {
  nlohmann::json j = {{"kind", m.kind == MetaLearner::kT ? "t_learner" : "s_learner"},
                      {"feature_count", m.feature_count}};
  if (m.kind == MetaLearner::kT) {
    j["mu1"] = LinearModelToJson(m.mu1);
    j["mu0"] = LinearModelToJson(m.mu0);
  } else {
    j["mu"] = LinearModelToJson(m.mu);
  }
  return j;
}

inline IteModel IteModelFromJson(const nlohmann::json& j) {
  try {
    IteModel m;
    const std::string kind = j.at("kind").get<std::string>();
    m.feature_count = j.at("feature_count").get<std::size_t>();
    if (kind == "t_learner") {
      m.kind = MetaLearner::kT;
      m.mu1 = LinearModelFromJson(j.at("mu1"));
      m.mu0 = LinearModelFromJson(j.at("mu0"));
      if (m.mu1.feature_count() != m.feature_count || m.mu0.feature_count() != m.feature_count) {
        throw Error(ErrorCode::kDimensionMismatch, "component models disagree on feature_count");
      }
    } else if (kind == "s_learner") {
      m.kind = MetaLearner::kS;
      m.mu = LinearModelFromJson(j.at("mu"));
      if (m.mu.feature_count() != 2 * m.feature_count + 1) {
        throw Error(ErrorCode::kDimensionMismatch, "s_learner model has the wrong width");
      }
    } else {
      throw Error(ErrorCode::kParse, "unknown ITE model kind '" + kind + "'");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("ITE model: ") + e.what());
  }
}

}  // namespace prescriptive
