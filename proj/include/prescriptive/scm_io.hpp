#pragma once

// JSON form of ScmConfig and the dataset CSV format:
//   unit_id,treatment,outcome,x0,...,x{d-1}[,propensity_true,y0,y1,tau_true]
// LF line endings, floats with 17 significant digits.

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "prescriptive/common.hpp"
#include "prescriptive/scm.hpp"

namespace prescriptive {

inline nlohmann::json ScmConfigToJson(const ScmConfig& config) {
  nlohmann::json j;
  j["kind"] = config.kind == ScmKind::kTabular ? "tabular" : "linear";
  j["mode"] = config.mode == AssignmentMode::kRct ? "rct" : "observational";
  j["p_treat"] = config.p_treat;
  j["outcome_direction"] = DirectionName(config.outcome_direction);
  j["noise_feature_count"] = config.noise_feature_count;
  j["allow_positivity_violation"] = config.allow_positivity_violation;
  if (config.kind == ScmKind::kTabular) {
    j["cells"] = nlohmann::json::array();
    for (const auto& cell : config.cells) {
      nlohmann::json covariates = nlohmann::json::array();
      for (const auto& [name, value] : cell.covariates) {
        covariates.push_back({{"name", name}, {"value", value}});
      }
      j["cells"].push_back({{"name", cell.name},
                            {"mass", cell.mass},
                            {"covariates", covariates},
                            {"p_outcome_control", cell.p_outcome_control},
                            {"p_outcome_treated", cell.p_outcome_treated},
                            {"propensity", cell.propensity}});
    }
  } else {
    const auto& lin = config.linear;
    j["linear"] = {{"feature_count", lin.feature_count},
                   {"propensity_coef", lin.propensity_coef},
                   {"propensity_intercept", lin.propensity_intercept},
                   {"outcome_coef", lin.outcome_coef},
                   {"outcome_intercept", lin.outcome_intercept},
                   {"effect_coef", lin.effect_coef},
                   {"effect_intercept", lin.effect_intercept}};
  }
  return j;
}

inline ScmConfig ScmConfigFromJson(const nlohmann::json& j) {
  try {
    ScmConfig config;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "tabular") {
      config.kind = ScmKind::kTabular;
    } else if (kind == "linear") {
      config.kind = ScmKind::kLinear;
    } else {
      throw Error(ErrorCode::kInvalidConfig, "unknown kind '" + kind + "'");
    }
    const std::string mode = j.value("mode", std::string("rct"));
    if (mode == "rct") {
      config.mode = AssignmentMode::kRct;
    } else if (mode == "observational") {
      config.mode = AssignmentMode::kObservational;
    } else {
      throw Error(ErrorCode::kInvalidConfig, "unknown mode '" + mode + "'");
    }
    config.p_treat = j.value("p_treat", 0.5);
    config.outcome_direction =
        ParseDirection(j.value("outcome_direction", std::string("higher_is_better")));
    config.noise_feature_count = j.value("noise_feature_count", std::size_t{0});
    config.allow_positivity_violation = j.value("allow_positivity_violation", false);
    if (config.kind == ScmKind::kTabular) {
      for (const auto& c : j.at("cells")) {
        CovariateCell cell;
        cell.name = c.at("name").get<std::string>();
        cell.mass = c.at("mass").get<double>();
        if (c.contains("covariates")) {
          for (const auto& cov : c.at("covariates")) {
            cell.covariates.emplace_back(cov.at("name").get<std::string>(),
                                         cov.at("value").get<std::string>());
          }
        }
        cell.p_outcome_control = c.at("p_outcome_control").get<double>();
        cell.p_outcome_treated = c.at("p_outcome_treated").get<double>();
        cell.propensity = c.value("propensity", 0.5);
        config.cells.push_back(std::move(cell));
      }
    } else {
      const auto& l = j.at("linear");
      auto& lin = config.linear;
      lin.feature_count = l.at("feature_count").get<std::size_t>();
      lin.propensity_coef =
          l.value("propensity_coef", std::vector<double>(lin.feature_count, 0.0));
      lin.propensity_intercept = l.value("propensity_intercept", 0.0);
      lin.outcome_coef = l.at("outcome_coef").get<std::vector<double>>();
      lin.outcome_intercept = l.value("outcome_intercept", 0.0);
      lin.effect_coef = l.at("effect_coef").get<std::vector<double>>();
      lin.effect_intercept = l.value("effect_intercept", 0.0);
    }
    return config;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, e.what());
  }
}

inline ScmConfig LoadScmConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  try {
    return ScmConfigFromJson(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kInvalidConfig, path + ": " + e.what());
  }
}

inline void WriteDatasetCsv(const Dataset& data, std::ostream& out) {
  const bool full = data.has_counterfactuals();
  out << "unit_id,treatment,outcome";
  for (std::size_t j = 0; j < data.feature_count; ++j) out << ",x" << j;
  if (full) out << ",propensity_true,y0,y1,tau_true";
  out << '\n';
  for (const auto& r : data.records) {
    out << r.unit_id << ',' << r.treatment << ',' << r.outcome;
    for (double v : r.features) out << ',' << FormatDouble(v);
    if (full) {
      out << ',' << FormatDouble(r.propensity_true) << ',' << r.y0 << ',' << r.y1 << ','
          << FormatDouble(r.tau_true);
    }
    out << '\n';
  }
}

inline void SaveDatasetCsv(const Dataset& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path);
  WriteDatasetCsv(data, out);
}

namespace detail {

inline std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline double ParseCsvDouble(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParse,
                "line " + std::to_string(line) + ": not a number: '" + s + "'");
  }
}

inline int ParseCsvBit(const std::string& s, std::size_t line) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw Error(ErrorCode::kParse,
              "line " + std::to_string(line) + ": expected 0 or 1, got '" + s + "'");
}

// Number of leading feature columns whose values are all 0 or 1.
inline std::size_t DetectCategoricalPrefix(const Dataset& data) {
  std::size_t k = 0;
  for (; k < data.feature_count; ++k) {
    for (const auto& r : data.records) {
      if (r.features[k] != 0.0 && r.features[k] != 1.0) return k;
    }
  }
  return k;
}

}  // namespace detail

// Reads a dataset CSV; the categorical prefix is detected from the data when
// not given.
inline Dataset ReadDatasetCsv(std::istream& in,
                              std::optional<std::size_t> categorical_count = {}) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "empty dataset file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::SplitCsvLine(line);
  if (header.size() < 3 || header[0] != "unit_id" || header[1] != "treatment" ||
      header[2] != "outcome") {
    throw Error(ErrorCode::kParse, "header must start with unit_id,treatment,outcome");
  }
  Dataset data;
  std::size_t d = 0;
  while (3 + d < header.size() && header[3 + d] == "x" + std::to_string(d)) ++d;
  data.feature_count = d;
  const std::size_t rest = header.size() - 3 - d;
  const std::vector<std::string> truth = {"propensity_true", "y0", "y1", "tau_true"};
  if (rest == 0) {
    data.provenance = Provenance::kObservationalLogged;
  } else if (rest == 4 && std::equal(truth.begin(), truth.end(), header.begin() + 3 + d)) {
    data.provenance = Provenance::kSyntheticFull;
  } else {
    throw Error(ErrorCode::kParse, "unexpected columns after features");
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = detail::SplitCsvLine(line);
    if (f.size() != header.size()) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(lineno) + ": expected " +
                                         std::to_string(header.size()) + " fields");
    }
    UnitRecord r;
    try {
      r.unit_id = std::stoull(f[0]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(lineno) + ": bad unit_id");
    }
    r.treatment = detail::ParseCsvBit(f[1], lineno);
    r.outcome = detail::ParseCsvBit(f[2], lineno);
    r.features.reserve(d);
    for (std::size_t j = 0; j < d; ++j) {
      r.features.push_back(detail::ParseCsvDouble(f[3 + j], lineno));
    }
    if (data.provenance == Provenance::kSyntheticFull) {
      r.propensity_true = detail::ParseCsvDouble(f[3 + d], lineno);
      r.y0 = detail::ParseCsvBit(f[4 + d], lineno);
      r.y1 = detail::ParseCsvBit(f[5 + d], lineno);
      r.tau_true = detail::ParseCsvDouble(f[6 + d], lineno);
    }
    data.records.push_back(std::move(r));
  }
  data.categorical_count =
      categorical_count ? *categorical_count : detail::DetectCategoricalPrefix(data);
  data.Validate();
  return data;
}

inline Dataset LoadDatasetCsv(const std::string& path,
                              std::optional<std::size_t> categorical_count = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  return ReadDatasetCsv(in, categorical_count);
}

}  // namespace prescriptive
