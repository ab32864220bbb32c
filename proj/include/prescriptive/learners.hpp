#pragma once

// L2-regularized logistic regression fit by full-batch gradient descent. This
// is the base learner behind outcome, propensity and meta-learner models.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "prescriptive/common.hpp"
#include "prescriptive/scm.hpp"

namespace prescriptive {

struct FitConfig {
  double learning_rate = 0.1;
  std::size_t max_iterations = 2000;
  // Stop once an accepted step lowers the loss by less than this.
  double tolerance = 1e-8;
  // Penalty on weights only; the bias is never shrunk.
  double l2 = 1e-3;
  // Fit on z-scored columns and fold the scaling back into the weights.
  bool standardize = false;
  bool record_loss_trace = false;

  void Validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw Error(ErrorCode::kInvalidConfig, "learning_rate must be positive");
    }
    if (max_iterations == 0) {
      throw Error(ErrorCode::kInvalidConfig, "max_iterations must be positive");
    }
    if (!(tolerance > 0.0)) throw Error(ErrorCode::kInvalidConfig, "tolerance must be positive");
    if (!(l2 >= 0.0) || !std::isfinite(l2)) {
      throw Error(ErrorCode::kInvalidConfig, "l2 must be non-negative");
    }
  }
};

struct TrainingMeta {
  std::size_t iterations_run = 0;
  double final_loss = 0.0;
  std::vector<double> loss_trace;  // filled when record_loss_trace is set

  bool operator==(const TrainingMeta&) const = default;
};

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  double l2 = 0.0;
  TrainingMeta training_meta;

  std::size_t feature_count() const noexcept { return weights.size(); }
  bool operator==(const LinearModel&) const = default;

  static LinearModel Zero(std::size_t feature_count) {
    LinearModel m;
    m.weights.assign(feature_count, 0.0);
    return m;
  }
};

struct LossAndGradient {
  double loss = 0.0;
  // d/d weights followed by d/d bias.
  std::vector<double> gradient;
};

namespace detail {

inline void CheckFinite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::kNonFiniteInput, std::string(what) + " contains non-finite values");
    }
  }
}

inline double SumWeights(std::span<const double> sample_weights, std::size_t n) {
  if (sample_weights.empty()) return static_cast<double>(n);
  double total = 0.0;
  for (double w : sample_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::kInvalidArgument, "sample weights must be finite and >= 0");
    }
    total += w;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::kInvalidArgument, "sample weights are all zero");
  return total;
}

}  // namespace detail

// Weighted mean cross-entropy plus (l2/2)*|weights|^2, with its exact
// gradient. An empty sample_weights span means unit weights.
inline LossAndGradient ComputeLossAndGradient(std::span<const double> weights, double bias,
                                              const Matrix& x, std::span<const double> y,
                                              std::span<const double> sample_weights,
                                              double l2) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (weights.size() != d) {
    throw Error(ErrorCode::kDimensionMismatch, "weights length " +
                                                   std::to_string(weights.size()) +
                                                   " vs " + std::to_string(d) + " columns");
  }
  if (y.size() != n || (!sample_weights.empty() && sample_weights.size() != n)) {
    throw Error(ErrorCode::kDimensionMismatch, "labels/sample weights must have one entry per row");
  }
  const double total = detail::SumWeights(sample_weights, n);

  LossAndGradient out;
  out.gradient.assign(d + 1, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = sample_weights.empty() ? 1.0 : sample_weights[i];
    if (w == 0.0) continue;
    const auto row = x.row(i);
    const double z = Dot(weights, row) + bias;
    loss += w * (Softplus(z) - y[i] * z);
    const double residual = w * (Sigmoid(z) - y[i]);
    for (std::size_t j = 0; j < d; ++j) out.gradient[j] += residual * row[j];
    out.gradient[d] += residual;
  }
  for (auto& g : out.gradient) g /= total;
  double norm2 = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    norm2 += weights[j] * weights[j];
    out.gradient[j] += l2 * weights[j];
  }
  out.loss = loss / total + 0.5 * l2 * norm2;
  return out;
}

inline double PredictProba(const LinearModel& model, std::span<const double> x) {
  if (x.size() != model.weights.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "model expects " + std::to_string(model.weights.size()) +
                    " features, got " + std::to_string(x.size()));
  }
  return Sigmoid(Dot(model.weights, x) + model.bias);
}

inline std::vector<double> PredictProbaAll(const LinearModel& model, const Matrix& x) {
  std::vector<double> p(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) p[i] = PredictProba(model, x.row(i));
  return p;
}

inline LinearModel FitLogistic(const Matrix& x, std::span<const double> y,
                               std::span<const double> sample_weights,
                               const FitConfig& config = {}) {
  config.Validate();
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (y.size() != n || (!sample_weights.empty() && sample_weights.size() != n)) {
    throw Error(ErrorCode::kDimensionMismatch, "labels/sample weights must have one entry per row");
  }
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "no training rows");
  for (std::size_t i = 0; i < n; ++i) detail::CheckFinite(x.row(i), "features");
  detail::CheckFinite(y, "labels");
  detail::SumWeights(sample_weights, n);
  for (double label : y) {
    if (label < 0.0 || label > 1.0) {
      throw Error(ErrorCode::kInvalidArgument, "labels must lie in [0, 1]");
    }
  }
  if (config.l2 == 0.0) {
    bool has_pos = false, has_neg = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!sample_weights.empty() && sample_weights[i] == 0.0) continue;
      has_pos |= y[i] > 0.0;
      has_neg |= y[i] < 1.0;
    }
    if (!(has_pos && has_neg)) {
      throw Error(ErrorCode::kDegenerateLabels,
                  "a single label class with l2 = 0 has no finite optimum");
    }
  }

  std::vector<double> mean(d, 0.0), scale(d, 1.0);
  const Matrix* design = &x;
  Matrix standardized;
  if (config.standardize) {
    standardized = x;
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += x(i, j);
      mean[j] = s / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) s2 += (x(i, j) - mean[j]) * (x(i, j) - mean[j]);
      const double sd = std::sqrt(s2 / static_cast<double>(n));
      scale[j] = sd > 0.0 ? sd : 1.0;
      for (std::size_t i = 0; i < n; ++i) standardized(i, j) = (x(i, j) - mean[j]) / scale[j];
    }
    design = &standardized;
  }

  std::vector<double> w(d, 0.0);
  double b = 0.0;
  LossAndGradient current = ComputeLossAndGradient(w, b, *design, y, sample_weights, config.l2);
  LinearModel model;
  if (config.record_loss_trace) model.training_meta.loss_trace.push_back(current.loss);

  std::size_t iter = 0;
  std::vector<double> w_next(d);
  while (iter < config.max_iterations) {
    ++iter;
    // Backtrack until the step does not increase the loss.
    double step = config.learning_rate;
    LossAndGradient next;
    double b_next = b;
    bool accepted = false;
    for (int halvings = 0; halvings < 60; ++halvings, step *= 0.5) {
      for (std::size_t j = 0; j < d; ++j) w_next[j] = w[j] - step * current.gradient[j];
      b_next = b - step * current.gradient[d];
      next = ComputeLossAndGradient(w_next, b_next, *design, y, sample_weights, config.l2);
      if (next.loss <= current.loss) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    const double decrease = current.loss - next.loss;
    w = w_next;
    b = b_next;
    current = std::move(next);
    if (config.record_loss_trace) model.training_meta.loss_trace.push_back(current.loss);
    if (decrease < config.tolerance) break;
  }

  if (config.standardize) {
    for (std::size_t j = 0; j < d; ++j) {
      w[j] /= scale[j];
      b -= w[j] * mean[j];
    }
  }
  model.weights = std::move(w);
  model.bias = b;
  model.l2 = config.l2;
  model.training_meta.iterations_run = iter;
  model.training_meta.final_loss = current.loss;
  return model;
}

namespace detail {

// Rows of the dataset, optionally restricted to one treatment arm.
inline std::vector<std::size_t> ArmRows(const Dataset& data, std::optional<int> arm) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!arm || data.records[i].treatment == *arm) rows.push_back(i);
  }
  return rows;
}

inline Matrix SelectRows(const Dataset& data, const std::vector<std::size_t>& rows) {
  Matrix x(rows.size(), data.feature_count);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto& f = data.records[rows[k]].features;
    std::copy(f.begin(), f.end(), x.row(k).begin());
  }
  return x;
}

}  // namespace detail

// Outcome model P(Y=1 | x), fit on one arm (e.g. control rows for a baseline
// risk model) or on all rows.
inline LinearModel FitOutcomeModel(const Dataset& data, const FitConfig& config,
                                   std::optional<int> arm = std::nullopt,
                                   std::span<const double> sample_weights = {}) {
  const auto rows = detail::ArmRows(data, arm);
  if (rows.empty()) throw Error(ErrorCode::kSingleArmDataset, "no rows in the requested arm");
  const Matrix x = detail::SelectRows(data, rows);
  std::vector<double> y(rows.size()), w;
  for (std::size_t k = 0; k < rows.size(); ++k) y[k] = data.records[rows[k]].outcome;
  if (!sample_weights.empty()) {
    if (sample_weights.size() != data.size()) {
      throw Error(ErrorCode::kLengthMismatch, "one sample weight per unit required");
    }
    for (std::size_t r : rows) w.push_back(sample_weights[r]);
  }
  return FitLogistic(x, y, w, config);
}

struct CalibrationBin {
  std::size_t count = 0;
  double mean_predicted = 0.0;
  double observed_rate = 0.0;
};

// Estimated e(x) = P(T=1 | x). Predict() clips into [clip_lo, clip_hi].
struct PropensityModel {
  LinearModel model;
  double clip_lo = 0.01;
  double clip_hi = 0.99;
  std::vector<CalibrationBin> calibration;

  double PredictRaw(std::span<const double> x) const { return PredictProba(model, x); }

  double Predict(std::span<const double> x) const {
    return std::clamp(PredictRaw(x), clip_lo, clip_hi);
  }

  std::vector<double> PredictAll(const Dataset& data) const {
    std::vector<double> e(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) e[i] = Predict(data.records[i].features);
    return e;
  }

  std::vector<double> PredictAllRaw(const Dataset& data) const {
    std::vector<double> e(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) e[i] = PredictRaw(data.records[i].features);
    return e;
  }
};

// Ten equal-count bins of units sorted by predicted score (ties by position).
inline std::vector<CalibrationBin> CalibrationByDecile(std::span<const double> predicted,
                                                       std::span<const double> observed) {
  const std::size_t n = predicted.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predicted[a] < predicted[b]; });
  std::vector<CalibrationBin> bins;
  for (std::size_t b = 0; b < 10; ++b) {
    const std::size_t lo = b * n / 10;
    const std::size_t hi = (b + 1) * n / 10;
    CalibrationBin bin;
    bin.count = hi - lo;
    for (std::size_t k = lo; k < hi; ++k) {
      bin.mean_predicted += predicted[order[k]];
      bin.observed_rate += observed[order[k]];
    }
    if (bin.count > 0) {
      bin.mean_predicted /= static_cast<double>(bin.count);
      bin.observed_rate /= static_cast<double>(bin.count);
    }
    bins.push_back(bin);
  }
  return bins;
}

inline PropensityModel FitPropensity(const Dataset& data, const FitConfig& config = {},
                                     double clip_lo = 0.01, double clip_hi = 0.99) {
  data.RequireBothArms();
  if (!(clip_lo > 0.0 && clip_lo < clip_hi && clip_hi < 1.0)) {
    throw Error(ErrorCode::kInvalidConfig, "clip bounds must satisfy 0 < lo < hi < 1");
  }
  const Matrix x = data.FeatureMatrix();
  const std::vector<double> t = data.Treatments();
  PropensityModel pm;
  pm.model = FitLogistic(x, t, {}, config);
  pm.clip_lo = clip_lo;
  pm.clip_hi = clip_hi;
  pm.calibration = CalibrationByDecile(PredictProbaAll(pm.model, x), t);
  return pm;
}

inline nlohmann::json LinearModelToJson(const LinearModel& m) {
  return {{"feature_count", m.feature_count()},
          {"weights", m.weights},
          {"bias", m.bias},
          {"l2", m.l2},
          {"training_meta",
           {{"iterations_run", m.training_meta.iterations_run},
            {"final_loss", m.training_meta.final_loss}}}};
}

inline LinearModel LinearModelFromJson(const nlohmann::json& j) {
  try {
    LinearModel m;
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.l2 = j.value("l2", 0.0);
    if (j.contains("feature_count") &&
        j.at("feature_count").get<std::size_t>() != m.weights.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "feature_count disagrees with weights");
    }
    if (j.contains("training_meta")) {
      m.training_meta.iterations_run = j["training_meta"].value("iterations_run", std::size_t{0});
      m.training_meta.final_loss = j["training_meta"].value("final_loss", 0.0);
    }
    detail::CheckFinite(m.weights, "weights");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("linear model: ") + e.what());
  }
}

inline nlohmann::json PropensityModelToJson(const PropensityModel& pm) {
  nlohmann::json j = LinearModelToJson(pm.model);
  j["clip"] = {pm.clip_lo, pm.clip_hi};
  j["calibration"] = nlohmann::json::array();
  for (const auto& bin : pm.calibration) {
    j["calibration"].push_back({{"count", bin.count},
                                {"mean_predicted", bin.mean_predicted},
                                {"observed_rate", bin.observed_rate}});
  }
  return j;
}

inline PropensityModel PropensityModelFromJson(const nlohmann::json& j) {
  PropensityModel pm;
  pm.model = LinearModelFromJson(j);
  if (j.contains("clip")) {
    pm.clip_lo = j["clip"].at(0).get<double>();
    pm.clip_hi = j["clip"].at(1).get<double>();
  }
  if (j.contains("calibration")) {
    for (const auto& b : j["calibration"]) {
      pm.calibration.push_back({b.at("count").get<std::size_t>(),
                                b.at("mean_predicted").get<double>(),
                                b.at("observed_rate").get<double>()});
    }
  }
  return pm;
}

}  // namespace prescriptive
