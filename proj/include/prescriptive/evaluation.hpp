#pragma once

// Policy scoring: uplift/Qini curves and AUUC on randomized data, offline
// policy evaluation (IPS, SNIPS, doubly robust) on logged data, exact
// counterfactual value on synthetic data, and decision compliance.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "prescriptive/common.hpp"
#include "prescriptive/policy.hpp"
#include "prescriptive/random.hpp"
#include "prescriptive/scm.hpp"
#include "prescriptive/uplift.hpp"

namespace prescriptive {

// ---------------------------------------------------------------------------
// Uplift curves

enum class CurveVariant { kUplift, kQini };

struct CurvePoint {
  double fraction = 0.0;
  double cumulative_uplift = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

struct UpliftCurve {
  std::vector<CurvePoint> points;
  double ate_total = 0.0;  // value at fraction 1 (treat everyone)
  CurveVariant variant = CurveVariant::kUplift;
  std::size_t n = 0;

  bool operator==(const UpliftCurve&) const = default;
};

// {0, 0.01, ..., 1}.
inline std::vector<double> DefaultGrid(std::size_t steps = 100) {
  std::vector<double> g(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) {
    g[i] = static_cast<double>(i) / static_cast<double>(steps);
  }
  return g;
}

namespace detail {

inline void CheckGrid(std::span<const double> grid) {
  if (grid.empty() || grid.front() != 0.0 || grid.back() != 1.0) {
    throw Error(ErrorCode::kInvalidArgument, "curve grid must start at 0 and end at 1");
  }
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) {
      throw Error(ErrorCode::kInvalidArgument, "curve grid must be strictly increasing");
    }
  }
}

struct ArmTally {
  double r_t = 0.0, n_t = 0.0, r_c = 0.0, n_c = 0.0;
};

// Curve ordinate for the top-k tally, or nullopt when an arm is empty.
inline std::optional<double> CurveValue(const ArmTally& a, double k, CurveVariant variant,
                                        OutcomeDirection direction) {
  if (a.n_t == 0.0 || a.n_c == 0.0) return std::nullopt;
  const double v = variant == CurveVariant::kUplift ? (a.r_t / a.n_t - a.r_c / a.n_c) * k
                                                    : a.r_t - a.r_c * (a.n_t / a.n_c);
  return DirectionSign(direction) * v;
}

}  // namespace detail

// Units ranked by score (descending, ties by unit_id). At each fraction q with
// k = floor(q N), the uplift variant reports (r_t/n_t - r_c/n_c) * k over the
// top k; Qini reports r_t - r_c * n_t / n_c. Fractions whose top k lacks an
// arm are skipped; q = 0 is pinned to 0. Lower-is-better outcomes are negated
// so that up is good.
inline UpliftCurve MakeUpliftCurve(const Dataset& data, std::span<const double> scores,
                                   std::span<const double> grid,
                                   OutcomeDirection direction = OutcomeDirection::kHigherIsBetter,
                                   CurveVariant variant = CurveVariant::kUplift) {
  data.RequireBothArms();
  if (scores.size() != data.size()) {
    throw Error(ErrorCode::kLengthMismatch, std::to_string(scores.size()) + " scores for " +
                                                std::to_string(data.size()) + " units");
  }
  detail::CheckGrid(grid);
  const auto ids = detail::UnitIds(data);
  const auto order = RankByScore(ids, scores);

  UpliftCurve curve;
  curve.variant = variant;
  curve.n = data.size();
  detail::ArmTally tally;
  std::size_t taken = 0;
  for (double q : grid) {
    const std::size_t k = TopCount(q, data.size());
    for (; taken < k; ++taken) {
      const auto& r = data.records[order[taken]];
      if (r.treatment == 1) {
        tally.n_t += 1.0;
        tally.r_t += r.outcome;
      } else {
        tally.n_c += 1.0;
        tally.r_c += r.outcome;
      }
    }
    if (q == 0.0) {
      curve.points.push_back({0.0, 0.0});
      continue;
    }
    if (auto v = detail::CurveValue(tally, static_cast<double>(k), variant, direction)) {
      curve.points.push_back({q, *v});
    }
  }
  curve.ate_total = curve.points.back().cumulative_uplift;
  return curve;
}

inline UpliftCurve MakeUpliftCurve(const Dataset& data, std::span<const double> scores,
                                   OutcomeDirection direction = OutcomeDirection::kHigherIsBetter,
                                   CurveVariant variant = CurveVariant::kUplift) {
  const auto grid = DefaultGrid();
  return MakeUpliftCurve(data, scores, grid, direction, variant);
}

// Trapezoidal area between the curve and the straight line from (0, 0) to
// (1, ate_total), divided by N.
inline double Auuc(const UpliftCurve& curve) {
  if (curve.points.size() < 2 || curve.n == 0) return 0.0;
  auto gap = [&](const CurvePoint& p) {
    return p.cumulative_uplift - p.fraction * curve.ate_total;
  };
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const auto& a = curve.points[i - 1];
    const auto& b = curve.points[i];
    area += 0.5 * (gap(a) + gap(b)) * (b.fraction - a.fraction);
  }
  return area / static_cast<double>(curve.n);
}

struct CurveArgmax {
  double fraction = 0.0;
  double cumulative_uplift = 0.0;
};

inline CurveArgmax CurveMaximum(const UpliftCurve& curve) {
  CurveArgmax best;
  for (const auto& p : curve.points) {
    if (p.cumulative_uplift > best.cumulative_uplift) best = {p.fraction, p.cumulative_uplift};
  }
  return best;
}

// Pointwise bootstrap spread of the curve ordinate, resampling units with
// replacement while keeping each unit's score.
struct CurveBand {
  std::vector<double> fractions;
  std::vector<double> mean;
  std::vector<double> std_dev;
  std::vector<std::size_t> defined;  // replicates in which the point existed
};

inline CurveBand BootstrapCurveBand(const Dataset& data, std::span<const double> scores,
                                    std::span<const double> grid, std::size_t replicates,
                                    std::uint64_t seed,
                                    OutcomeDirection direction = OutcomeDirection::kHigherIsBetter,
                                    CurveVariant variant = CurveVariant::kUplift) {
  data.RequireBothArms();
  if (scores.size() != data.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one score per unit required");
  }
  detail::CheckGrid(grid);
  const std::size_t n = data.size();
  const auto ids = detail::UnitIds(data);
  const auto order = RankByScore(ids, scores);
  const std::size_t g = grid.size();
  std::vector<double> sum(g, 0.0), sum2(g, 0.0);
  std::vector<std::size_t> defined(g, 0);
  std::vector<std::uint32_t> counts(n);
  Rng rng(seed);
  for (std::size_t b = 0; b < replicates; ++b) {
    std::fill(counts.begin(), counts.end(), 0u);
    for (std::size_t i = 0; i < n; ++i) ++counts[rng.Below(n)];
    detail::ArmTally tally;
    std::size_t pos = 0, used = 0, taken = 0;
    for (std::size_t gi = 0; gi < g; ++gi) {
      const std::size_t k = TopCount(grid[gi], n);
      while (taken < k) {
        const std::size_t i = order[pos];
        const std::size_t take = std::min<std::size_t>(counts[i] - used, k - taken);
        const auto& r = data.records[i];
        if (r.treatment == 1) {
          tally.n_t += take;
          tally.r_t += take * r.outcome;
        } else {
          tally.n_c += take;
          tally.r_c += take * r.outcome;
        }
        taken += take;
        used += take;
        if (used == counts[i]) {
          ++pos;
          used = 0;
        }
      }
      const auto v = grid[gi] == 0.0
                         ? std::optional<double>(0.0)
                         : detail::CurveValue(tally, static_cast<double>(k), variant, direction);
      if (v) {
        sum[gi] += *v;
        sum2[gi] += *v * *v;
        ++defined[gi];
      }
    }
  }
  CurveBand band;
  band.fractions.assign(grid.begin(), grid.end());
  band.defined = defined;
  for (std::size_t gi = 0; gi < g; ++gi) {
    const double m = defined[gi] ? sum[gi] / defined[gi] : 0.0;
    const double var =
        defined[gi] > 1 ? std::max(0.0, (sum2[gi] - defined[gi] * m * m) / (defined[gi] - 1.0)) : 0.0;
    band.mean.push_back(m);
    band.std_dev.push_back(std::sqrt(var));
  }
  return band;
}

// True iff every curve point with positive bootstrap spread lies within
// z standard deviations of the random-targeting diagonal.
inline bool CurveWithinDiagonalBand(const UpliftCurve& curve, const CurveBand& band,
                                    double z = 3.0) {
  for (const auto& p : curve.points) {
    const auto it = std::find(band.fractions.begin(), band.fractions.end(), p.fraction);
    if (it == band.fractions.end()) continue;
    const double sd = band.std_dev[static_cast<std::size_t>(it - band.fractions.begin())];
    if (sd == 0.0) continue;
    if (std::abs(p.cumulative_uplift - p.fraction * curve.ate_total) > z * sd) return false;
  }
  return true;
}

inline void WriteCurveCsv(const UpliftCurve& curve, std::ostream& out) {
  out << "q,cumulative_uplift\n";
  for (const auto& p : curve.points) {
    out << FormatDouble(p.fraction) << ',' << FormatDouble(p.cumulative_uplift) << '\n';
  }
}

// Line chart of one or more curves plus the random diagonal of the first.
inline std::string CurveSvg(const std::vector<std::pair<std::string, UpliftCurve>>& curves) {
  const double width = 640, height = 400, margin = 40;
  double lo = 0.0, hi = 0.0;
  for (const auto& [name, c] : curves) {
    for (const auto& p : c.points) {
      lo = std::min(lo, p.cumulative_uplift);
      hi = std::max(hi, p.cumulative_uplift);
    }
  }
  if (hi == lo) hi = lo + 1.0;
  auto px = [&](double q) { return margin + q * (width - 2 * margin); };
  auto py = [&](double v) { return height - margin - (v - lo) / (hi - lo) * (height - 2 * margin); };
  const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<line x1=\"" + FormatShort(px(0), 1) + "\" y1=\"" + FormatShort(py(0), 1) + "\" x2=\"" +
         FormatShort(px(1), 1) + "\" y2=\"" + FormatShort(py(0), 1) +
         "\" stroke=\"#999\" stroke-width=\"1\"/>\n";
  if (!curves.empty()) {
    const auto& c = curves.front().second;
    svg += "<line x1=\"" + FormatShort(px(0), 1) + "\" y1=\"" + FormatShort(py(0), 1) +
           "\" x2=\"" + FormatShort(px(1), 1) + "\" y2=\"" + FormatShort(py(c.ate_total), 1) +
           "\" stroke=\"#777\" stroke-dasharray=\"4 4\"/>\n";
  }
  for (std::size_t k = 0; k < curves.size(); ++k) {
    const auto& [name, c] = curves[k];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(colors[k % 4]) +
           "\" stroke-width=\"2\" points=\"";
    for (const auto& p : c.points) {
      svg += FormatShort(px(p.fraction), 1) + "," + FormatShort(py(p.cumulative_uplift), 1) + " ";
    }
    svg += "\"/>\n";
    svg += "<text x=\"" + FormatShort(margin + 10, 1) + "\" y=\"" +
           FormatShort(margin + 16 * static_cast<double>(k + 1), 1) + "\" fill=\"" +
           colors[k % 4] + "\" font-size=\"12\">" + name + "</text>\n";
  }
  svg += "<text x=\"" + FormatShort(width / 2, 1) + "\" y=\"" + FormatShort(height - 8, 1) +
         "\" font-size=\"12\" text-anchor=\"middle\">targeted fraction</text>\n";
  svg += "</svg>\n";
  return svg;
}

// ---------------------------------------------------------------------------
// Offline policy evaluation

enum class OpeMethod { kIps, kSnips, kDr };

inline const char* OpeMethodName(OpeMethod m) {
  switch (m) {
    case OpeMethod::kIps: return "ips";
    case OpeMethod::kSnips: return "snips";
    case OpeMethod::kDr: return "dr";
  }
  return "?";
}

struct OpeEstimate {
  double value = 0.0;
  OpeMethod method = OpeMethod::kIps;
  double effective_sample_size = 0.0;
  double std_error = 0.0;
};

// mu(x, t): estimated P(Y=1 | x, do(T=t)).
using OutcomeFn = std::function<double(std::span<const double>, int)>;

inline OutcomeFn ZeroOutcomeModel() {
  return [](std::span<const double>, int) { return 0.0; };
}

// The generating model's exact outcome probabilities.
inline OutcomeFn ScmOutcomeModel(const Scm& scm) {
  return [&scm](std::span<const double> x, int t) { return scm.OutcomeProbability(x, t); };
}

inline OutcomeFn IteOutcomeModel(const IteModel& model) {
  return [&model](std::span<const double> x, int t) { return PredictOutcome(model, x, t); };
}

namespace detail {

// 1{pi(x_i) = t_i} / p_i(t_i).
inline std::vector<double> MatchWeights(std::span<const int> actions, const Dataset& logged,
                                        std::span<const double> propensities) {
  if (actions.size() != logged.size() || propensities.size() != logged.size()) {
    throw Error(ErrorCode::kLengthMismatch, "actions, propensities and units must align");
  }
  if (logged.empty()) throw Error(ErrorCode::kInvalidArgument, "empty log");
  std::vector<double> w(logged.size());
  for (std::size_t i = 0; i < logged.size(); ++i) {
    const double e = propensities[i];
    if (!(e > 0.0 && e < 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "logging propensities must lie in (0, 1)");
    }
    const int t = logged.records[i].treatment;
    w[i] = actions[i] == t ? 1.0 / (t == 1 ? e : 1.0 - e) : 0.0;
  }
  return w;
}

inline double EffectiveSampleSize(std::span<const double> w) {
  double s = 0.0, s2 = 0.0;
  for (double x : w) {
    s += x;
    s2 += x * x;
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

inline std::pair<double, double> MeanAndStdError(std::span<const double> terms) {
  const double n = static_cast<double>(terms.size());
  double mean = 0.0;
  for (double t : terms) mean += t;
  mean /= n;
  double ss = 0.0;
  for (double t : terms) ss += (t - mean) * (t - mean);
  const double se = terms.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return {mean, se};
}

}  // namespace detail

// (1/N) sum 1{pi(x_i)=t_i} y_i / p_i(t_i).
inline OpeEstimate IpsValue(std::span<const int> actions, const Dataset& logged,
                            std::span<const double> propensities) {
  const auto w = detail::MatchWeights(actions, logged, propensities);
  std::vector<double> terms(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) terms[i] = w[i] * logged.records[i].outcome;
  const auto [mean, se] = detail::MeanAndStdError(terms);
  return {mean, OpeMethod::kIps, detail::EffectiveSampleSize(w), se};
}

// IPS normalized by the mean importance weight.
inline OpeEstimate SnipsValue(std::span<const int> actions, const Dataset& logged,
                              std::span<const double> propensities) {
  const auto w = detail::MatchWeights(actions, logged, propensities);
  double sw = 0.0, swy = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    sw += w[i];
    swy += w[i] * logged.records[i].outcome;
  }
  OpeEstimate est;
  est.method = OpeMethod::kSnips;
  est.effective_sample_size = detail::EffectiveSampleSize(w);
  if (sw == 0.0) return est;
  est.value = swy / sw;
  // Delta-method terms w_i (y_i - value) / mean(w).
  const double mean_w = sw / static_cast<double>(w.size());
  std::vector<double> terms(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    terms[i] = w[i] * (logged.records[i].outcome - est.value) / mean_w;
  }
  est.std_error = detail::MeanAndStdError(terms).second;
  return est;
}

// (1/N) sum [mu(x_i, pi(x_i)) + 1{pi(x_i)=t_i} (y_i - mu(x_i, t_i)) / p_i(t_i)].
inline OpeEstimate DrValue(std::span<const int> actions, const Dataset& logged,
                           std::span<const double> propensities, const OutcomeFn& outcome_model) {
  const auto w = detail::MatchWeights(actions, logged, propensities);
  std::vector<double> terms(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto& r = logged.records[i];
    terms[i] = outcome_model(r.features, actions[i]);
    if (w[i] != 0.0) terms[i] += w[i] * (r.outcome - outcome_model(r.features, r.treatment));
  }
  const auto [mean, se] = detail::MeanAndStdError(terms);
  return {mean, OpeMethod::kDr, detail::EffectiveSampleSize(w), se};
}

inline OpeEstimate IpsValue(const Policy& policy, const Dataset& logged,
                            std::span<const double> propensities) {
  return IpsValue(Decide(policy, logged).Actions(), logged, propensities);
}

inline OpeEstimate SnipsValue(const Policy& policy, const Dataset& logged,
                              std::span<const double> propensities) {
  return SnipsValue(Decide(policy, logged).Actions(), logged, propensities);
}

inline OpeEstimate DrValue(const Policy& policy, const Dataset& logged,
                           std::span<const double> propensities, const OutcomeFn& outcome_model) {
  return DrValue(Decide(policy, logged).Actions(), logged, propensities, outcome_model);
}

// Exact realized value (1/N) sum (pi(x_i) ? y1_i : y0_i). This is the raw
// outcome mean (the KPI), not sign-adjusted for direction.
inline double OracleValue(std::span<const int> actions, const Dataset& data) {
  data.RequireCounterfactuals();
  if (actions.size() != data.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one action per unit required");
  }
  if (data.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    sum += actions[i] == 1 ? data.records[i].y1 : data.records[i].y0;
  }
  return sum / static_cast<double>(data.size());
}

inline double OracleValue(const Policy& policy, const Dataset& data) {
  return OracleValue(Decide(policy, data).Actions(), data);
}

// Count of outcome improvements caused by the policy relative to treating no
// one: sign * sum pi(x_i) (y1_i - y0_i).
inline double OracleIncrementalOutcome(std::span<const int> actions, const Dataset& data,
                                       OutcomeDirection direction) {
  data.RequireCounterfactuals();
  if (actions.size() != data.size()) {
    throw Error(ErrorCode::kLengthMismatch, "one action per unit required");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (actions[i] == 1) sum += data.records[i].y1 - data.records[i].y0;
  }
  return DirectionSign(direction) * sum;
}

inline nlohmann::json ToJson(const OpeEstimate& e) {
  return {{"method", OpeMethodName(e.method)},
          {"value", e.value},
          {"effective_sample_size", e.effective_sample_size},
          {"std_error", e.std_error}};
}

// ---------------------------------------------------------------------------
// Compliance

struct PerformedAction {
  std::uint64_t unit_id = 0;
  int action = 0;
  std::string reason;  // optional interference label
};

struct ComplianceReport {
  // table[decision][performed]
  std::array<std::array<std::size_t, 2>, 2> table{};
  // P(performed == d | decision == d); absent when nothing was decided d.
  std::array<std::optional<double>, 2> compliance_rate;
  std::map<std::string, std::size_t> interference_breakdown;
  std::size_t joined = 0;
  std::size_t unmatched_decisions = 0;
  std::size_t unmatched_performed = 0;
};

inline ComplianceReport MakeComplianceReport(const DecisionBatch& decisions,
                                             std::span<const PerformedAction> performed) {
  std::unordered_map<std::uint64_t, std::size_t> by_id;
  for (std::size_t i = 0; i < performed.size(); ++i) {
    if (!by_id.emplace(performed[i].unit_id, i).second) {
      throw Error(ErrorCode::kDuplicateUnitIds,
                  "performed actions repeat unit " + std::to_string(performed[i].unit_id));
    }
  }
  std::unordered_map<std::uint64_t, bool> seen;
  ComplianceReport report;
  std::size_t matched_performed = 0;
  for (const auto& d : decisions.decisions) {
    if (!seen.emplace(d.unit_id, true).second) {
      throw Error(ErrorCode::kDuplicateUnitIds,
                  "decisions repeat unit " + std::to_string(d.unit_id));
    }
    const auto it = by_id.find(d.unit_id);
    if (it == by_id.end()) {
      ++report.unmatched_decisions;
      continue;
    }
    ++matched_performed;
    const auto& p = performed[it->second];
    ++report.table[d.action][p.action];
    ++report.joined;
    if (!p.reason.empty()) ++report.interference_breakdown[p.reason];
  }
  report.unmatched_performed = performed.size() - matched_performed;
  for (int d = 0; d < 2; ++d) {
    const std::size_t decided = report.table[d][0] + report.table[d][1];
    if (decided > 0) {
      report.compliance_rate[d] =
          static_cast<double>(report.table[d][d]) / static_cast<double>(decided);
    }
  }
  return report;
}

inline nlohmann::json ToJson(const ComplianceReport& r) {
  auto rate = [](const std::optional<double>& v) -> nlohmann::json {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  return {{"table",
           {{"decided_control", {{"performed_control", r.table[0][0]}, {"performed_treat", r.table[0][1]}}},
            {"decided_treat", {{"performed_control", r.table[1][0]}, {"performed_treat", r.table[1][1]}}}}},
          {"compliance_rate", {{"control", rate(r.compliance_rate[0])}, {"treat", rate(r.compliance_rate[1])}}},
          {"interference_breakdown", r.interference_breakdown},
          {"joined", r.joined},
          {"unmatched_decisions", r.unmatched_decisions},
          {"unmatched_performed", r.unmatched_performed}};
}

// CSV: unit_id,action[,reason]
inline std::vector<PerformedAction> ReadPerformedCsv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParse, "empty performed-actions file");
  const auto header = detail::SplitCsvLine(line);
  if (header.size() < 2 || header[0] != "unit_id" || header[1] != "action") {
    throw Error(ErrorCode::kParse, "performed CSV header must start with unit_id,action");
  }
  const bool has_reason = header.size() >= 3 && header[2] == "reason";
  std::vector<PerformedAction> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::SplitCsvLine(line);
    if (f.size() < 2) throw Error(ErrorCode::kParse, "line " + std::to_string(lineno) + ": too few fields");
    PerformedAction p;
    try {
      p.unit_id = std::stoull(f[0]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kParse, "line " + std::to_string(lineno) + ": bad unit_id");
    }
    p.action = detail::ParseCsvBit(f[1], lineno);
    if (has_reason && f.size() >= 3) p.reason = f[2];
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rank statistics

// Ranks 1..n with ties sharing their average rank.
inline std::vector<double> AverageRanks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  return rank;
}

inline double PearsonCorrelation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) {
    throw Error(ErrorCode::kLengthMismatch, "correlation needs equal, non-empty inputs");
  }
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// Spearman rank correlation with average ranks for ties.
inline double SpearmanCorrelation(std::span<const double> a, std::span<const double> b) {
  const auto ra = AverageRanks(a);
  const auto rb = AverageRanks(b);
  return PearsonCorrelation(ra, rb);
}

}  // namespace prescriptive
