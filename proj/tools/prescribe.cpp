// prescribe: command-line front end for the prescriptive library.
//
//   prescribe generate | check | fit | decide | evaluate
//   prescribe canvas init | validate | render
//   prescribe demo simpson | churn
//
// Exit codes: 0 ok, 1 usage, 2 validation failure or demo guard, 3 data error.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "prescriptive/canvas.hpp"
#include "prescriptive/causal_checks.hpp"
#include "prescriptive/evaluation.hpp"
#include "prescriptive/learners.hpp"
#include "prescriptive/policy.hpp"
#include "prescriptive/scm.hpp"
#include "prescriptive/scm_io.hpp"
#include "prescriptive/uplift.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prescriptive;

namespace {

constexpr const char* kToolVersion = "0.1.0";

enum Exit : int { kExitOk = 0, kExitUsage = 1, kExitValidation = 2, kExitData = 3 };

struct Options {
  std::uint64_t seed = 7;
  std::size_t n = 0;
  std::string config;
  std::string out;
  std::string format = "text";
  std::string preset = "four_segment";
  std::string learner = "t";
  std::string policy = "prescriptive";
  double threshold = 0.0;
  double fraction = 0.25;
  bool positive_only = false;
  std::string direction;
  std::string canvas;
  std::string data;
  std::string model_dir;
  std::string decisions;
  std::string performed;
  std::string propensity = "auto";
  std::string weighting = "none";
  std::string decided_at = kDefaultDecidedAt;
  double eps = 0.05;
  std::size_t bootstrap = 0;
  bool logged = false;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string UtcNow() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void WriteFile(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << content;
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string Pretty(const json& j) { return j.dump(2) + "\n"; }

// Bookkeeping for one command invocation: inputs, outputs and the manifest.
class Run {
 public:
  Run(std::string command, const Options& opt, json flags)
      : command_(std::move(command)),
        opt_(opt),
        flags_(std::move(flags)),
        start_(std::chrono::steady_clock::now()),
        started_at_(UtcNow()) {
    if (!opt_.out.empty()) fs::create_directories(opt_.out);
  }

  bool has_out() const { return !opt_.out.empty(); }

  void RequireOut() const {
    if (!has_out()) throw UsageError(command_ + " needs --out <dir>");
  }

  void Input(const std::string& path) {
    if (!path.empty()) inputs_.push_back(path);
  }

  fs::path Output(const std::string& name) {
    RequireOut();
    const fs::path p = fs::path(opt_.out) / name;
    outputs_.push_back(p.string());
    return p;
  }

  void Write(const std::string& name, const std::string& content) { WriteFile(Output(name), content); }

  void Finish() {
    if (!has_out()) return;
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    json manifest = {{"command", command_},
                     {"config_digest", HexDigest(Fnv1a64(flags_.dump()))},
                     {"flags", flags_},
                     {"seed", opt_.seed},
                     {"inputs", inputs_},
                     {"outputs", outputs_},
                     {"tool_version", kToolVersion},
                     {"started_at", started_at_},
                     {"duration_seconds", seconds}};
    WriteFile(fs::path(opt_.out) / "manifest.json", Pretty(manifest));
  }

 private:
  std::string command_;
  const Options& opt_;
  json flags_;
  std::chrono::steady_clock::time_point start_;
  std::string started_at_;
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
};

bool JsonOut(const Options& o) { return o.format == "json"; }

std::string Pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

std::string Num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::abs(v) < 5e-5) v = 0.0;
  return FormatShort(v);
}


// Plain aligned table.
std::string Table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], r[c].size());
    }
  }
  std::string out;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t c = 0; c < r.size(); ++c) {
      line += c + 1 < r.size() ? Pad(r[c], width[c] + 2) : r[c];
    }
    out += line + "\n";
  }
  return out;
}

ScmConfig ResolveScmConfig(const Options& o) {
  if (!o.config.empty()) return LoadScmConfig(o.config);
  if (o.preset == "simpson") return SimpsonPreset();
  if (o.preset == "four_segment") return FourSegmentPreset();
  throw UsageError("unknown preset '" + o.preset + "'");
}

OutcomeDirection ResolveDirection(const Options& o) {
  if (!o.canvas.empty()) {
    return CanvasToPipelineConfig(ParseCanvas(ReadFile(o.canvas))).outcome_direction;
  }
  if (!o.direction.empty()) {
    try {
      return ParseDirection(o.direction);
    } catch (const Error&) {
      throw UsageError("unknown direction '" + o.direction + "'");
    }
  }
  return OutcomeDirection::kHigherIsBetter;
}

Dataset RequireData(const Options& o, Run& run) {
  if (o.data.empty()) throw UsageError("--data <csv> is required");
  run.Input(o.data);
  return LoadDatasetCsv(o.data);
}

MetaLearner ResolveLearner(const Options& o) {
  if (o.learner == "t") return MetaLearner::kT;
  if (o.learner == "s") return MetaLearner::kS;
  throw UsageError("--learner must be t or s");
}

double Mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// ---------------------------------------------------------------------------
// generate

int CmdGenerate(const Options& o, Run& run) {
  run.RequireOut();
  run.Input(o.config);
  const ScmConfig config = ResolveScmConfig(o);
  const Scm scm = BuildScm(config);
  const std::size_t n = o.n ? o.n : 10000;
  Dataset data = SampleDataset(scm, n, o.seed);
  if (o.logged) data = data.AsLogged();
  {
    std::ostringstream csv;
    WriteDatasetCsv(data, csv);
    run.Write("dataset.csv", csv.str());
  }
  run.Write("scm_config.json", Pretty(ScmConfigToJson(config)));

  json summary = {{"n", data.size()},
                  {"treated", data.TreatedCount()},
                  {"mean_outcome", Mean(data.Outcomes())},
                  {"feature_names", scm.FeatureNames()},
                  {"provenance", o.logged ? "observational_logged" : "synthetic_full"}};
  if (scm.kind() == ScmKind::kTabular) {
    summary["true_ate"] = TrueAte(scm);
    summary["exact_naive_contrast"] = ExactNaiveContrast(scm);
  }
  if (JsonOut(o)) {
    std::cout << Pretty(summary);
  } else {
    std::cout << "generated " << data.size() << " units (" << data.TreatedCount()
              << " treated), mean outcome " << Num(Mean(data.Outcomes())) << "\n";
    if (summary.contains("true_ate")) {
      std::cout << "true ATE " << Num(summary["true_ate"]) << ", exact naive contrast "
                << Num(summary["exact_naive_contrast"]) << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// check

json BalanceJsonWithLabel(const BalanceReport& r) { return ToJson(r); }

int CmdCheck(const Options& o, Run& run) {
  const Dataset data = RequireData(o, run);
  const PropensityModel pm = FitPropensity(data);
  const auto positivity = MakePositivityReport(data, pm, o.eps);
  const auto estimated = pm.PredictAll(data);
  const auto balance_est = MakeBalanceReport(data, InverseProbabilityWeights(data, estimated));
  json report = {{"positivity", ToJson(positivity)},
                 {"balance_estimated_propensity", BalanceJsonWithLabel(balance_est)}};
  std::optional<BalanceReport> balance_true;
  std::optional<bool> consistent;
  if (data.has_counterfactuals()) {
    balance_true = MakeBalanceReport(data, InverseProbabilityWeights(data, data.TruePropensities()));
    report["balance_true_propensity"] = ToJson(*balance_true);
    consistent = ConsistencyCheck(data);
    report["consistency"] = *consistent;
  }
  report["no_hidden_confounding"] = "not testable from data";
  if (run.has_out()) run.Write("check.json", Pretty(report));

  if (JsonOut(o)) {
    std::cout << Pretty(report);
    return kExitOk;
  }
  std::cout << "positivity: " << VerdictName(positivity.verdict) << "  (eps " << Num(o.eps)
            << ", propensity range " << Num(positivity.min_propensity) << " .. "
            << Num(positivity.max_propensity) << ", below eps "
            << Num(positivity.fraction_below_eps) << ", above 1-eps "
            << Num(positivity.fraction_above_one_minus_eps) << ")\n";
  std::vector<std::vector<std::string>> rows = {{"stratum", "treated", "control"}};
  for (const auto& s : positivity.per_cell_arm_counts) {
    std::string key;
    for (double v : s.key) key += v == 1.0 ? "1" : "0";
    rows.push_back({key.empty() ? "(all)" : key, std::to_string(s.treated), std::to_string(s.control)});
  }
  std::cout << Table(rows) << "\n";
  std::vector<std::vector<std::string>> brows = {{"feature", "smd", "smd_ipw_est"}};
  if (balance_true) brows[0].push_back("smd_ipw_true");
  for (std::size_t f = 0; f < balance_est.features.size(); ++f) {
    std::vector<std::string> row = {"x" + std::to_string(f), Num(balance_est.features[f].smd_unweighted),
                                    Num(*balance_est.features[f].smd_weighted)};
    if (balance_true) row.push_back(Num(*balance_true->features[f].smd_weighted));
    brows.push_back(row);
  }
  std::cout << Table(brows);
  std::cout << "max |smd|: " << Num(balance_est.max_abs_smd_unweighted) << " unweighted, "
            << Num(*balance_est.max_abs_smd_weighted) << " ipw(estimated)";
  if (balance_true) std::cout << ", " << Num(*balance_true->max_abs_smd_weighted) << " ipw(true)";
  std::cout << "\n";
  if (consistent) std::cout << "consistency: " << (*consistent ? "ok" : "VIOLATED") << "\n";
  std::cout << "no hidden confounding: not testable from data\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// fit

int CmdFit(const Options& o, Run& run) {
  run.RequireOut();
  const Dataset data = RequireData(o, run);
  const MetaLearner kind = ResolveLearner(o);
  const FitConfig config;
  const PropensityModel pm = FitPropensity(data, config);
  std::vector<double> weights;
  if (o.weighting == "ipw") {
    weights = InverseProbabilityWeights(data, pm.PredictAll(data));
  } else if (o.weighting != "none") {
    throw UsageError("--weighting must be none or ipw");
  }
  const IteModel ite = FitIteModel(kind, data, config, weights);
  // Baseline outcome model on untreated units; the predictive policy's risk.
  const LinearModel baseline = FitOutcomeModel(data, config, 0);
  run.Write("ite_model.json", Pretty(IteModelToJson(ite)));
  run.Write("propensity_model.json", Pretty(PropensityModelToJson(pm)));
  run.Write("outcome_model.json", Pretty(LinearModelToJson(baseline)));

  const auto tau = PredictIteAll(ite, data);
  json summary = {{"learner", o.learner == "t" ? "t_learner" : "s_learner"},
                  {"weighting", o.weighting},
                  {"mean_tau_hat", Mean(tau)},
                  {"positive_tau_share",
                   static_cast<double>(std::count_if(tau.begin(), tau.end(), [](double t) { return t > 0; })) /
                       static_cast<double>(tau.size())}};
  if (data.has_counterfactuals()) {
    summary["spearman_tau_true"] = SpearmanCorrelation(tau, data.TrueEffects());
  }
  if (JsonOut(o)) {
    std::cout << Pretty(summary);
  } else {
    std::cout << "fitted " << summary["learner"].get<std::string>() << " on " << data.size()
              << " units; mean tau_hat " << Num(summary["mean_tau_hat"]) << "\n";
    if (summary.contains("spearman_tau_true")) {
      std::cout << "spearman(tau_hat, tau_true) " << Num(summary["spearman_tau_true"]) << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// decide

IteModel LoadIteModel(const Options& o, Run& run) {
  if (o.model_dir.empty()) throw UsageError("--model-dir <dir> (from `fit`) is required");
  const std::string path = (fs::path(o.model_dir) / "ite_model.json").string();
  run.Input(path);
  try {
    return IteModelFromJson(json::parse(ReadFile(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
}

LinearModel LoadOutcomeModel(const Options& o, Run& run) {
  if (o.model_dir.empty()) throw UsageError("--model-dir <dir> (from `fit`) is required");
  const std::string path = (fs::path(o.model_dir) / "outcome_model.json").string();
  run.Input(path);
  try {
    return LinearModelFromJson(json::parse(ReadFile(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::kParse, path + ": " + e.what());
  }
}

int CmdDecide(const Options& o, Run& run, bool threshold_given) {
  run.RequireOut();
  const Dataset data = RequireData(o, run);
  run.Input(o.canvas);
  const OutcomeDirection direction = ResolveDirection(o);
  Policy policy;
  policy.direction = direction;
  policy.id = o.policy;
  PolicySpec spec;
  spec.kind = o.policy;
  spec.id = o.policy;
  spec.direction = direction;
  if (o.policy == "predictive") {
    const double t = threshold_given ? o.threshold : 0.5;
    policy.rule = PredictiveRule{LoadOutcomeModel(o, run), t};
    spec.threshold = t;
    spec.model_path = (fs::path(o.model_dir) / "outcome_model.json").string();
  } else if (o.policy == "prescriptive") {
    const double t = threshold_given ? o.threshold : 0.0;
    policy.rule = PrescriptiveRule{LoadIteModel(o, run), t};
    spec.threshold = t;
    spec.model_path = (fs::path(o.model_dir) / "ite_model.json").string();
  } else if (o.policy == "budget") {
    if (!(o.fraction >= 0.0 && o.fraction <= 1.0)) throw UsageError("--fraction must lie in [0, 1]");
    policy.rule = BudgetRule{LoadIteModel(o, run), o.fraction, o.positive_only};
    spec.target_fraction = o.fraction;
    spec.positive_only = o.positive_only;
    spec.model_path = (fs::path(o.model_dir) / "ite_model.json").string();
  } else if (o.policy == "oracle") {
    policy = OraclePolicy(data, direction);
  } else {
    throw UsageError("--policy must be predictive, prescriptive, budget or oracle");
  }
  const DecisionBatch batch = Decide(policy, data, o.decided_at);
  {
    std::ostringstream csv;
    WriteDecisionsCsv(batch, csv);
    run.Write("decisions.csv", csv.str());
  }
  run.Write("policy.json", Pretty(PolicySpecToJson(spec)));
  json summary = {{"policy", o.policy},
                  {"direction", DirectionName(direction)},
                  {"units", batch.size()},
                  {"treated", batch.TreatedCount()}};
  if (JsonOut(o)) {
    std::cout << Pretty(summary);
  } else {
    std::cout << o.policy << " policy treats " << batch.TreatedCount() << " of " << batch.size()
              << " units (" << DirectionName(direction) << ")\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate

int CmdEvaluate(const Options& o, Run& run) {
  const Dataset data = RequireData(o, run);
  if (o.decisions.empty()) throw UsageError("--decisions <csv> is required");
  run.Input(o.decisions);
  run.Input(o.canvas);
  const OutcomeDirection direction = ResolveDirection(o);
  DecisionBatch batch;
  {
    std::ifstream in(o.decisions, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + o.decisions);
    batch = ReadDecisionsCsv(in);
  }
  std::map<std::uint64_t, std::size_t> row_of;
  for (std::size_t i = 0; i < data.size(); ++i) row_of[data.records[i].unit_id] = i;
  std::vector<int> actions(data.size(), -1);
  std::vector<double> scores(data.size(), 0.0);
  for (const auto& d : batch.decisions) {
    const auto it = row_of.find(d.unit_id);
    if (it == row_of.end()) {
      throw Error(ErrorCode::kLengthMismatch, "decision for unknown unit " + std::to_string(d.unit_id));
    }
    actions[it->second] = d.action;
    scores[it->second] = d.score;
  }
  if (std::find(actions.begin(), actions.end(), -1) != actions.end()) {
    throw Error(ErrorCode::kLengthMismatch, "decisions do not cover every unit");
  }

  std::string source = o.propensity;
  if (source == "auto") source = data.has_counterfactuals() ? "true" : "estimated";
  std::vector<double> e;
  if (source == "true") {
    data.RequireCounterfactuals();
    e = data.TruePropensities();
  } else if (source == "estimated") {
    e = FitPropensity(data).PredictAll(data);
  } else {
    throw UsageError("--propensity must be auto, true or estimated");
  }

  json report;
  report["propensity_source"] = source;
  report["treated_share"] =
      static_cast<double>(std::count(actions.begin(), actions.end(), 1)) / static_cast<double>(actions.size());
  std::optional<IteModel> ite;
  if (!o.model_dir.empty()) ite = LoadIteModel(o, run);
  const OutcomeFn mu = ite ? IteOutcomeModel(*ite) : ZeroOutcomeModel();
  const auto ips = IpsValue(actions, data, e);
  const auto snips = SnipsValue(actions, data, e);
  const auto dr = DrValue(actions, data, e, mu);
  report["ope"] = {ToJson(ips), ToJson(snips), ToJson(dr)};
  report["dr_outcome_model"] = ite ? "ite_model" : "zero";
  if (data.has_counterfactuals()) {
    report["oracle_value"] = OracleValue(actions, data);
    report["oracle_incremental_outcome"] = OracleIncrementalOutcome(actions, data, direction);
  }

  std::optional<UpliftCurve> curve;
  if (data.TreatedCount() > 0 && data.TreatedCount() < data.size()) {
    curve = MakeUpliftCurve(data, scores, direction);
    const auto best = CurveMaximum(*curve);
    report["uplift_curve"] = {{"auuc", Auuc(*curve)},
                              {"ate_total", curve->ate_total},
                              {"argmax_fraction", best.fraction},
                              {"argmax_value", best.cumulative_uplift}};
    if (o.bootstrap > 0) {
      const auto grid = DefaultGrid();
      const auto band = BootstrapCurveBand(data, scores, grid, o.bootstrap, o.seed, direction);
      report["uplift_curve"]["within_random_band"] = CurveWithinDiagonalBand(*curve, band);
    }
  }

  std::optional<ComplianceReport> compliance;
  if (!o.performed.empty()) {
    run.Input(o.performed);
    std::ifstream in(o.performed, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + o.performed);
    const auto performed = ReadPerformedCsv(in);
    compliance = MakeComplianceReport(batch, performed);
    report["compliance"] = ToJson(*compliance);
  }

  if (run.has_out()) {
    run.Write("evaluation.json", Pretty(report));
    if (curve) {
      std::ostringstream csv;
      WriteCurveCsv(*curve, csv);
      run.Write("uplift_curve.csv", csv.str());
      run.Write("uplift_curve.svg", CurveSvg({{"policy score", *curve}}));
    }
    if (compliance) run.Write("compliance.json", Pretty(ToJson(*compliance)));
  }

  if (JsonOut(o)) {
    std::cout << Pretty(report);
    return kExitOk;
  }
  std::vector<std::vector<std::string>> rows = {{"estimator", "value", "std_error", "ess"}};
  for (const auto& est : {ips, snips, dr}) {
    rows.push_back({OpeMethodName(est.method), Num(est.value), Num(est.std_error),
                    FormatShort(est.effective_sample_size, 1)});
  }
  std::cout << "propensities: " << source << "; DR outcome model: "
            << (ite ? "ite_model" : "zero") << "\n"
            << Table(rows);
  if (report.contains("oracle_value")) {
    std::cout << "oracle value " << Num(report["oracle_value"]) << ", incremental outcome "
              << FormatShort(report["oracle_incremental_outcome"], 1) << "\n";
  }
  if (curve) {
    std::cout << "uplift curve: AUUC " << Num(report["uplift_curve"]["auuc"]) << ", argmax q="
              << FormatShort(report["uplift_curve"]["argmax_fraction"], 2) << "\n";
  }
  if (compliance) {
    auto rate = [](const std::optional<double>& r) { return r ? Num(*r) : std::string("n/a"); };
    std::cout << "compliance: treat " << rate(compliance->compliance_rate[1]) << ", control "
              << rate(compliance->compliance_rate[0]) << " over " << compliance->joined
              << " joined units\n";
    for (const auto& [reason, count] : compliance->interference_breakdown) {
      std::cout << "  " << reason << ": " << count << "\n";
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// canvas

Canvas LoadCanvas(const Options& o, Run& run) {
  if (o.canvas.empty()) throw UsageError("--canvas <file> is required");
  run.Input(o.canvas);
  return ParseCanvas(ReadFile(o.canvas));
}

int CmdCanvasInit(const Options&, Run& run) {
  run.Write("prescriptive.canvas", CanvasTemplate());
  std::cout << "wrote canvas template\n";
  return kExitOk;
}

int CmdCanvasValidate(const Options& o, Run& run) {
  const Canvas canvas = LoadCanvas(o, run);
  const auto violations = ValidateCanvas(canvas);
  if (run.has_out()) run.Write("violations.json", Pretty(ToJson(violations)));
  if (JsonOut(o)) {
    std::cout << Pretty(ToJson(violations));
  } else if (violations.empty()) {
    std::cout << "canvas is valid\n";
  } else {
    for (const auto& v : violations) std::cout << v.rule << "  " << v.cell << ": " << v.message << "\n";
  }
  return violations.empty() ? kExitOk : kExitValidation;
}

int CmdCanvasRender(const Options& o, Run& run) {
  const Canvas canvas = LoadCanvas(o, run);
  const std::string md = RenderCanvasMarkdown(canvas);
  const PipelineConfig pipeline = CanvasToPipelineConfig(canvas);
  if (run.has_out()) {
    run.Write("canvas.md", md);
    run.Write("pipeline.json", Pretty(ToJson(pipeline)));
  }
  if (JsonOut(o)) {
    std::cout << Pretty({{"markdown", md}, {"pipeline", ToJson(pipeline)}});
  } else if (!run.has_out()) {
    std::cout << md;
  } else {
    std::cout << "rendered canvas; pipeline direction " << DirectionName(pipeline.outcome_direction)
              << ", horizon " << pipeline.horizon_days << " days\n";
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// demos

json AteJson(const AteEstimate& a) { return {{"value", a.value}, {"std_error", a.std_error}}; }

int CmdDemoSimpson(const Options& o, Run& run) {
  const Scm scm = BuildScm(SimpsonPreset());
  const std::size_t n = o.n ? o.n : 100000;
  const Dataset data = SampleDataset(scm, n, o.seed);
  const double truth = TrueAte(scm);
  const AteEstimate naive = AteNaive(data);
  const AteEstimate ipw_true = AteIpw(data, data.TruePropensities());
  std::optional<AteEstimate> ipw_est;
  try {
    ipw_est = AteIpw(data, FitPropensity(data).PredictAll(data));
  } catch (const Error&) {
    // Too few units in one arm to fit a propensity model.
  }
  const bool flipped = std::signbit(naive.value) != std::signbit(truth) && naive.value != 0.0;
  const bool wide = 2.0 * naive.std_error > std::abs(naive.value - truth) ||
                    2.0 * ipw_true.std_error > std::abs(truth);

  json report = {{"seed", o.seed},
                 {"n", n},
                 {"true_ate", truth},
                 {"exact_naive_contrast", ExactNaiveContrast(scm)},
                 {"naive", AteJson(naive)},
                 {"ipw_true_propensity", AteJson(ipw_true)},
                 {"ipw_estimated_propensity", ipw_est ? AteJson(*ipw_est) : json(nullptr)},
                 {"sign_flip", flipped},
                 {"wide_uncertainty", wide}};
  std::ostringstream text;
  text << "Simpson demo: churn under targeting, confounded by engagement\n"
       << "seed " << o.seed << ", n " << n << "\n";
  std::vector<std::vector<std::string>> rows = {{"estimate", "value", "std_error"},
                                                {"true ATE (exact)", Num(truth), "-"},
                                                {"naive contrast", Num(naive.value), Num(naive.std_error)},
                                                {"IPW, true e(x)", Num(ipw_true.value), Num(ipw_true.std_error)}};
  if (ipw_est) {
    rows.push_back({"IPW, estimated e(x)", Num(ipw_est->value), Num(ipw_est->std_error)});
  } else {
    rows.push_back({"IPW, estimated e(x)", "n/a", "-"});
  }
  text << Table(rows);
  text << (flipped ? "naive sign is opposite to the true effect (Simpson reversal reproduced)\n"
                   : "REGRESSION: naive estimate has the same sign as the true effect\n");
  if (wide) text << "warning: sample too small, standard errors are wide relative to the effect\n";

  if (run.has_out()) {
    run.Write("simpson_report.json", Pretty(report));
    run.Write("simpson_report.txt", text.str());
  }
  std::cout << (JsonOut(o) ? Pretty(report) : text.str());
  return flipped ? kExitOk : kExitValidation;
}

int CmdDemoChurn(const Options& o, Run& run) {
  const Scm scm = BuildScm(FourSegmentPreset());
  const std::size_t n = o.n ? o.n : 50000;
  const Dataset data = SampleDataset(scm, n, o.seed);
  const OutcomeDirection dir = scm.outcome_direction();
  const FitConfig config;
  const IteModel ite = FitIteModel(ResolveLearner(o), data, config);
  const LinearModel baseline = FitOutcomeModel(data, config, 0);

  const auto ids = detail::UnitIds(data);
  std::vector<double> risk(data.size()), benefit(data.size()), oracle(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& x = data.records[i].features;
    risk[i] = RiskScore(baseline, x, dir);
    benefit[i] = Benefit(PredictIte(ite, x), dir);
    oracle[i] = Benefit(data.records[i].tau_true, dir);
  }

  json sweep = json::array();
  std::ostringstream csv;
  csv << "q,predictive_value,prescriptive_value,oracle_value,predictive_incremental,"
         "prescriptive_incremental,oracle_incremental\n";
  std::vector<std::vector<std::string>> rows = {
      {"q", "predictive", "prescriptive", "oracle", "pred_incr/N", "presc_incr/N"}};
  bool dominated = true;
  double pred_25 = 0.0, presc_25 = 0.0;
  const double nn = static_cast<double>(n);
  for (int k = 1; k <= 20; ++k) {
    const double q = k / 20.0;
    const auto a_pred = DecideTopFraction(ids, risk, q, false);
    const auto a_presc = DecideTopFraction(ids, benefit, q, false);
    const auto a_orc = DecideTopFraction(ids, oracle, q, false);
    const double v_pred = OracleValue(a_pred, data);
    const double v_presc = OracleValue(a_presc, data);
    const double v_orc = OracleValue(a_orc, data);
    const double i_pred = OracleIncrementalOutcome(a_pred, data, dir);
    const double i_presc = OracleIncrementalOutcome(a_presc, data, dir);
    const double i_orc = OracleIncrementalOutcome(a_orc, data, dir);
    if (DirectionSign(dir) * (v_presc - v_pred) < 0.0) dominated = false;
    if (k == 5) {
      pred_25 = i_pred;
      presc_25 = i_presc;
    }
    sweep.push_back({{"q", q},
                     {"predictive_value", v_pred},
                     {"prescriptive_value", v_presc},
                     {"oracle_value", v_orc},
                     {"predictive_incremental", i_pred},
                     {"prescriptive_incremental", i_presc},
                     {"oracle_incremental", i_orc}});
    csv << FormatDouble(q) << ',' << FormatDouble(v_pred) << ',' << FormatDouble(v_presc) << ','
        << FormatDouble(v_orc) << ',' << FormatDouble(i_pred) << ',' << FormatDouble(i_presc) << ','
        << FormatDouble(i_orc) << '\n';
    rows.push_back({FormatShort(q, 2), Num(v_pred), Num(v_presc), Num(v_orc), Num(i_pred / nn),
                    Num(i_presc / nn)});
  }
  const std::optional<double> ratio =
      pred_25 > 0.0 ? std::optional<double>(presc_25 / pred_25) : std::nullopt;

  const auto grid = DefaultGrid();
  const auto curve_pred = MakeUpliftCurve(data, risk, grid, dir);
  const auto curve_presc = MakeUpliftCurve(data, benefit, grid, dir);
  const auto curve_orc = MakeUpliftCurve(data, oracle, grid, dir);

  json report = {{"seed", o.seed},
                 {"n", n},
                 {"learner", o.learner == "t" ? "t_learner" : "s_learner"},
                 {"sweep", sweep},
                 {"q25",
                  {{"predictive_incremental", pred_25},
                   {"prescriptive_incremental", presc_25},
                   {"ratio", ratio ? json(*ratio) : json(nullptr)}}},
                 {"auuc",
                  {{"predictive", Auuc(curve_pred)},
                   {"prescriptive", Auuc(curve_presc)},
                   {"oracle", Auuc(curve_orc)}}},
                 {"prescriptive_dominates", dominated}};

  std::ostringstream text;
  text << "Churn demo: predictive (risk) vs prescriptive (effect) targeting\n"
       << "seed " << o.seed << ", n " << n << ", outcome retained (higher is better)\n"
       << Table(rows)
       << "at q=0.25: prescriptive incremental " << FormatShort(presc_25, 1) << " ("
       << Num(presc_25 / nn) << " N), predictive " << FormatShort(pred_25, 1) << " ("
       << Num(pred_25 / nn) << " N), ratio "
       << (ratio ? FormatShort(*ratio, 2) : std::string("undefined (predictive incremental <= 0)"))
       << "\n"
       << "AUUC predictive " << Num(Auuc(curve_pred)) << ", prescriptive " << Num(Auuc(curve_presc))
       << ", oracle " << Num(Auuc(curve_orc)) << "\n"
       << (dominated ? "prescriptive value >= predictive value at every budget\n"
                     : "REGRESSION: predictive beats prescriptive at some budget\n");

  if (run.has_out()) {
    run.Write("churn_report.json", Pretty(report));
    run.Write("churn_report.txt", text.str());
    run.Write("budget_sweep.csv", csv.str());
    std::ostringstream c1, c2;
    WriteCurveCsv(curve_pred, c1);
    WriteCurveCsv(curve_presc, c2);
    run.Write("uplift_predictive.csv", c1.str());
    run.Write("uplift_prescriptive.csv", c2.str());
    run.Write("uplift_curves.svg",
              CurveSvg({{"prescriptive", curve_presc}, {"predictive", curve_pred}, {"oracle", curve_orc}}));
  }
  std::cout << (JsonOut(o) ? Pretty(report) : text.str());
  return dominated ? kExitOk : kExitValidation;
}

int ExitFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return kExitUsage;
    case ErrorCode::kInvalidCanvas:
      return kExitValidation;
    default:
      return kExitData;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prescriptive modeling toolkit: synthetic causal data, uplift models, "
               "policies, evaluation and the prescriptive canvas."};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  Options o;
  std::string command;
  CLI::Option* threshold_opt = nullptr;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", o.out, "Output directory");
    sub->add_option("--format", o.format, "Report format")->check(CLI::IsMember({"text", "json", "csv"}));
    sub->add_option("--seed", o.seed, "Random seed");
  };
  auto data_flag = [&](CLI::App* sub) { sub->add_option("--data", o.data, "Dataset CSV"); };
  auto direction_flags = [&](CLI::App* sub) {
    sub->add_option("--direction", o.direction, "higher_is_better or lower_is_better");
    sub->add_option("--canvas", o.canvas, "Canvas file supplying the outcome direction");
  };

  auto* gen = app.add_subcommand("generate", "Sample a dataset from a preset or SCM config");
  common(gen);
  gen->add_option("--n", o.n, "Number of units (default 10000)");
  gen->add_option("--preset", o.preset, "simpson or four_segment")->check(CLI::IsMember({"simpson", "four_segment"}));
  gen->add_option("--config", o.config, "SCM config JSON (overrides --preset)");
  gen->add_flag("--logged", o.logged, "Drop ground-truth columns");

  auto* check = app.add_subcommand("check", "Positivity, balance and consistency diagnostics");
  common(check);
  data_flag(check);
  check->add_option("--eps", o.eps, "Positivity margin");

  auto* fit = app.add_subcommand("fit", "Fit propensity, baseline outcome and ITE models");
  common(fit);
  data_flag(fit);
  fit->add_option("--learner", o.learner, "t or s")->check(CLI::IsMember({"t", "s"}));
  fit->add_option("--weighting", o.weighting, "none or ipw")->check(CLI::IsMember({"none", "ipw"}));

  auto* decide = app.add_subcommand("decide", "Render per-unit decisions for a policy");
  common(decide);
  data_flag(decide);
  direction_flags(decide);
  decide->add_option("--model-dir", o.model_dir, "Directory written by `fit`");
  decide->add_option("--policy", o.policy, "predictive, prescriptive, budget or oracle")
      ->check(CLI::IsMember({"predictive", "prescriptive", "budget", "oracle"}));
  threshold_opt = decide->add_option("--threshold", o.threshold, "Decision threshold");
  decide->add_option("--fraction", o.fraction, "Budget fraction for --policy budget");
  decide->add_flag("--positive-only", o.positive_only, "Budget policy also requires benefit > 0");
  decide->add_option("--decided-at", o.decided_at, "Timestamp stamped on every decision");

  auto* evaluate = app.add_subcommand("evaluate", "Off-policy, oracle, uplift and compliance evaluation");
  common(evaluate);
  data_flag(evaluate);
  direction_flags(evaluate);
  evaluate->add_option("--decisions", o.decisions, "decisions.csv from `decide`");
  evaluate->add_option("--model-dir", o.model_dir, "ITE model directory for the DR estimator");
  evaluate->add_option("--performed", o.performed, "CSV unit_id,action[,reason] of performed actions");
  evaluate->add_option("--propensity", o.propensity, "auto, true or estimated")
      ->check(CLI::IsMember({"auto", "true", "estimated"}));
  evaluate->add_option("--bootstrap", o.bootstrap, "Bootstrap replicates for the random-ranking band");

  auto* canvas = app.add_subcommand("canvas", "Prescriptive canvas tools");
  canvas->require_subcommand(1);
  auto* c_init = canvas->add_subcommand("init", "Write a commented canvas template");
  common(c_init);
  auto* c_validate = canvas->add_subcommand("validate", "Check a canvas against the rules");
  common(c_validate);
  c_validate->add_option("--canvas", o.canvas, "Canvas file");
  auto* c_render = canvas->add_subcommand("render", "Render a valid canvas as Markdown");
  common(c_render);
  c_render->add_option("--canvas", o.canvas, "Canvas file");

  auto* demo = app.add_subcommand("demo", "Headline demonstrations");
  demo->require_subcommand(1);
  auto* d_simpson = demo->add_subcommand("simpson", "Simpson reversal and its IPW correction");
  common(d_simpson);
  d_simpson->add_option("--n", o.n, "Number of units (default 100000)");
  auto* d_churn = demo->add_subcommand("churn", "Predictive vs prescriptive targeting under a budget");
  common(d_churn);
  d_churn->add_option("--n", o.n, "Number of units (default 50000)");
  d_churn->add_option("--learner", o.learner, "t or s")->check(CLI::IsMember({"t", "s"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  // Flags that shape the outputs; the digest is taken over this object.
  auto flags_for = [&](const std::string& name) {
    json f;
    for (const CLI::App* sub : {gen, check, fit, decide, evaluate, c_init, c_validate, c_render,
                                d_simpson, d_churn}) {
      if (!sub->parsed()) continue;
      for (const CLI::Option* opt : sub->get_options()) {
        if (opt->get_single_name() == "help" || opt->count() == 0) continue;
        const auto res = opt->results();
        f[opt->get_single_name()] = res.size() == 1 ? json(res[0]) : json(res);
      }
    }
    f["command"] = name;
    return f;
  };

  try {
    auto run_with = [&](const std::string& name, auto&& body) {
      Run run(name, o, flags_for(name));
      const int code = body(run);
      run.Finish();
      return code;
    };
    if (gen->parsed()) return run_with("generate", [&](Run& r) { return CmdGenerate(o, r); });
    if (check->parsed()) return run_with("check", [&](Run& r) { return CmdCheck(o, r); });
    if (fit->parsed()) return run_with("fit", [&](Run& r) { return CmdFit(o, r); });
    if (decide->parsed()) {
      return run_with("decide", [&](Run& r) { return CmdDecide(o, r, threshold_opt->count() > 0); });
    }
    if (evaluate->parsed()) return run_with("evaluate", [&](Run& r) { return CmdEvaluate(o, r); });
    if (c_init->parsed()) return run_with("canvas init", [&](Run& r) { return CmdCanvasInit(o, r); });
    if (c_validate->parsed()) {
      return run_with("canvas validate", [&](Run& r) { return CmdCanvasValidate(o, r); });
    }
    if (c_render->parsed()) return run_with("canvas render", [&](Run& r) { return CmdCanvasRender(o, r); });
    if (d_simpson->parsed()) return run_with("demo simpson", [&](Run& r) { return CmdDemoSimpson(o, r); });
    if (d_churn->parsed()) return run_with("demo churn", [&](Run& r) { return CmdDemoChurn(o, r); });
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidCanvasError& e) {
    std::cerr << "invalid canvas: " << e.what() << "\n";
    for (const auto& v : e.violations()) std::cerr << "  " << v.rule << "  " << v.cell << ": " << v.message << "\n";
    return kExitValidation;
  } catch (const CanvasParseError& e) {
    std::cerr << "canvas parse error: " << e.what() << "\n";
    return kExitData;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return ExitFor(e.code());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error [Io]: " << e.what() << "\n";
    return kExitData;
  }
  std::cerr << app.help();
  return kExitUsage;
}
