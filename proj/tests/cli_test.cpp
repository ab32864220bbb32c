#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "json.hpp"
#include "prescriptive/canvas.hpp"
#include "prescriptive/policy.hpp"
#include "prescriptive/scm_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace prescriptive {
namespace {

struct Result {
  int code;
  std::string out;
};

std::string Slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("prescribe_cli_" + std::string(info->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result Run(const std::string& args) {
    const fs::path log = dir_ / "stdout.txt";
    const std::string cmd = std::string("\"") + PRESCRIBE_EXE + "\" " + args + " > \"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, Slurp(log)};
  }

  std::string D(const std::string& sub) const { return (dir_ / sub).string(); }

  static std::string Fixture(const std::string& name) {
    return std::string(PRESCRIPTIVE_FIXTURE_DIR) + "/" + name;
  }

  fs::path dir_;
};

TEST_F(Cli, PipelineProducesArtifacts) {
  ASSERT_EQ(Run("generate --n 3000 --seed 5 --out " + D("gen")).code, 0);
  EXPECT_TRUE(fs::exists(D("gen/dataset.csv")));
  EXPECT_TRUE(fs::exists(D("gen/scm_config.json")));
  const Dataset data = LoadDatasetCsv(D("gen/dataset.csv"));
  EXPECT_EQ(data.size(), 3000u);
  EXPECT_TRUE(data.has_counterfactuals());

  ASSERT_EQ(Run("fit --data " + D("gen/dataset.csv") + " --out " + D("fit")).code, 0);
  for (const char* f : {"ite_model.json", "propensity_model.json", "outcome_model.json"}) {
    EXPECT_TRUE(fs::exists(D("fit/") + f)) << f;
  }
  ASSERT_EQ(Run("decide --policy budget --fraction 0.2 --data " + D("gen/dataset.csv") + " --model-dir " +
                D("fit") + " --out " + D("dec"))
                .code,
            0);
  std::ifstream dec(D("dec/decisions.csv"));
  const auto batch = ReadDecisionsCsv(dec);
  EXPECT_EQ(batch.size(), 3000u);
  EXPECT_EQ(batch.TreatedCount(), 600u);
  EXPECT_EQ(batch.decisions.front().decided_at, kDefaultDecidedAt);

  const auto ev = Run("evaluate --format json --data " + D("gen/dataset.csv") + " --decisions " +
                      D("dec/decisions.csv") + " --out " + D("ev"));
  ASSERT_EQ(ev.code, 0) << ev.out;
  const json report = json::parse(ev.out);
  EXPECT_EQ(report["propensity_source"], "true");
  EXPECT_EQ(report["ope"].size(), 3u);
  EXPECT_TRUE(report.contains("oracle_value"));
  EXPECT_TRUE(fs::exists(D("ev/uplift_curve.csv")));
  EXPECT_EQ(Slurp(D("ev/uplift_curve.csv")).substr(0, 19), "q,cumulative_uplift");
  EXPECT_EQ(json::parse(Slurp(D("ev/evaluation.json"))), report);
}

TEST_F(Cli, ManifestRecordsRun) {
  ASSERT_EQ(Run("generate --n 500 --seed 9 --out " + D("gen")).code, 0);
  const json m = json::parse(Slurp(D("gen/manifest.json")));
  EXPECT_EQ(m["command"], "generate");
  EXPECT_EQ(m["seed"], 9);
  EXPECT_EQ(m["tool_version"], "0.1.0");
  EXPECT_EQ(m["outputs"].size(), 2u);
  EXPECT_EQ(m["config_digest"].get<std::string>().size(), 16u);
  EXPECT_TRUE(m.contains("started_at"));
  EXPECT_TRUE(m.contains("duration_seconds"));
  ASSERT_EQ(Run("generate --n 500 --seed 10 --out " + D("gen2")).code, 0);
  EXPECT_NE(json::parse(Slurp(D("gen2/manifest.json")))["config_digest"], m["config_digest"]);
}

TEST_F(Cli, RerunIsByteIdentical) {
  ASSERT_EQ(Run("generate --n 2000 --seed 4 --out " + D("a")).code, 0);
  ASSERT_EQ(Run("generate --n 2000 --seed 4 --out " + D("b")).code, 0);
  EXPECT_EQ(Slurp(D("a/dataset.csv")), Slurp(D("b/dataset.csv")));
  ASSERT_EQ(Run("fit --data " + D("a/dataset.csv") + " --out " + D("fa")).code, 0);
  ASSERT_EQ(Run("fit --data " + D("a/dataset.csv") + " --out " + D("fb")).code, 0);
  EXPECT_EQ(Slurp(D("fa/ite_model.json")), Slurp(D("fb/ite_model.json")));
  ASSERT_EQ(Run("generate --n 2000 --seed 5 --out " + D("c")).code, 0);
  EXPECT_NE(Slurp(D("a/dataset.csv")), Slurp(D("c/dataset.csv")));
}

TEST_F(Cli, LoggedDatasetDropsGroundTruth) {
  ASSERT_EQ(Run("generate --preset simpson --logged --n 2000 --out " + D("g")).code, 0);
  const Dataset d = LoadDatasetCsv(D("g/dataset.csv"));
  EXPECT_FALSE(d.has_counterfactuals());
  ASSERT_EQ(Run("decide --policy oracle --data " + D("g/dataset.csv") + " --out " + D("o")).code, 3);
  const auto check = Run("check --format json --data " + D("g/dataset.csv"));
  ASSERT_EQ(check.code, 0) << check.out;
  EXPECT_FALSE(json::parse(check.out).contains("consistency"));
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(Run("").code, 1);
  EXPECT_EQ(Run("nonsense").code, 1);
  EXPECT_EQ(Run("decide --policy sideways").code, 1);
  EXPECT_EQ(Run("generate --n 10").code, 1);  // no --out
  EXPECT_EQ(Run("check").code, 1);
  EXPECT_EQ(Run("check --data " + D("missing.csv")).code, 3);
  std::ofstream(D("bad.csv")) << "not,a,dataset\n1,2\n";
  EXPECT_EQ(Run("check --data " + D("bad.csv")).code, 3);
  std::ofstream(D("broken.canvas")) << "[meta]\ntitle = unquoted\n";
  EXPECT_EQ(Run("canvas validate --canvas " + D("broken.canvas")).code, 3);
  EXPECT_EQ(Run("--version").code, 0);
  EXPECT_EQ(Run("--help").code, 0);
}

TEST_F(Cli, CanvasCommands) {
  ASSERT_EQ(Run("canvas init --out " + D("c")).code, 0);
  const auto tmpl = Run("canvas validate --format json --canvas " + D("c/prescriptive.canvas"));
  EXPECT_EQ(tmpl.code, 2);
  EXPECT_EQ(json::parse(tmpl.out).size(), 10u);
  EXPECT_EQ(Run("canvas render --canvas " + D("c/prescriptive.canvas")).code, 2);

  EXPECT_EQ(Run("canvas validate --canvas " + Fixture("churn.canvas")).code, 0);
  ASSERT_EQ(Run("canvas render --canvas " + Fixture("churn.canvas") + " --out " + D("r")).code, 0);
  const json pipeline = json::parse(Slurp(D("r/pipeline.json")));
  EXPECT_EQ(pipeline["outcome_direction"], "lower_is_better");
  EXPECT_EQ(pipeline["horizon_days"], 30);
  EXPECT_NE(Slurp(D("r/canvas.md")).find("Retention call optimization"), std::string::npos);
}

TEST_F(Cli, CanvasSetsDecisionDirection) {
  ASSERT_EQ(Run("generate --n 1000 --out " + D("g")).code, 0);
  ASSERT_EQ(Run("decide --policy oracle --canvas " + Fixture("conversion.canvas") + " --data " +
                D("g/dataset.csv") + " --out " + D("up"))
                .code,
            0);
  ASSERT_EQ(Run("decide --policy oracle --direction lower_is_better --data " + D("g/dataset.csv") + " --out " +
                D("down"))
                .code,
            0);
  const json up = json::parse(Slurp(D("up/policy.json")));
  EXPECT_EQ(up["direction"], "higher_is_better");
  std::ifstream a(D("up/decisions.csv")), b(D("down/decisions.csv"));
  const auto ua = ReadDecisionsCsv(a), db = ReadDecisionsCsv(b);
  // Persuadables and sleeping dogs swap places.
  for (std::size_t i = 0; i < ua.size(); ++i) {
    if (ua.decisions[i].action == 1) EXPECT_EQ(db.decisions[i].action, 0);
  }
}

TEST_F(Cli, ComplianceReport) {
  ASSERT_EQ(Run("generate --n 1000 --out " + D("g")).code, 0);
  ASSERT_EQ(Run("decide --policy oracle --data " + D("g/dataset.csv") + " --out " + D("d")).code, 0);
  std::ofstream perf(D("performed.csv"));
  perf << "unit_id,action,reason\n";
  for (int i = 0; i < 1000; ++i) perf << i << ",0,unreachable\n";
  perf.close();
  ASSERT_EQ(Run("evaluate --data " + D("g/dataset.csv") + " --decisions " + D("d/decisions.csv") +
                " --performed " + D("performed.csv") + " --out " + D("e"))
                .code,
            0);
  const json c = json::parse(Slurp(D("e/compliance.json")));
  EXPECT_EQ(c["joined"], 1000);
}

TEST_F(Cli, SimpsonDemo) {
  const auto r = Run("demo simpson --format json --out " + D("s"));
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_TRUE(j["sign_flip"].get<bool>());
  EXPECT_NEAR(j["naive"]["value"].get<double>(), 0.25, 0.01);
  EXPECT_NEAR(j["ipw_true_propensity"]["value"].get<double>(), -0.05, 0.02);
  EXPECT_NEAR(j["true_ate"].get<double>(), -0.05, 1e-12);
  // Small samples keep the flip but announce wide intervals.
  const auto small = Run("demo simpson --n 200 --seed 1");
  EXPECT_NE(small.out.find("warning"), std::string::npos) << small.out;
}

TEST_F(Cli, ChurnDemo) {
  const auto r = Run("demo churn --n 20000 --format json --out " + D("c"));
  ASSERT_EQ(r.code, 0) << r.out;
  const json j = json::parse(r.out);
  EXPECT_TRUE(j["prescriptive_dominates"].get<bool>());
  EXPECT_EQ(j["sweep"].size(), 20u);
  EXPECT_GE(j["q25"]["prescriptive_incremental"].get<double>(), 0.06 * 20000);
  EXPECT_TRUE(fs::exists(D("c/budget_sweep.csv")));
  EXPECT_TRUE(fs::exists(D("c/uplift_curves.svg")));
}

}  // namespace
}  // namespace prescriptive
