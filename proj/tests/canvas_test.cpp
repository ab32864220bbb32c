#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "prescriptive/canvas.hpp"
#include "test_support.hpp"

namespace prescriptive {
namespace {

using testing::ReadFixture;

Canvas Churn() { return ParseCanvas(ReadFixture("churn.canvas")); }

// Random UTF-8 text mixing ASCII, escapes, control bytes, multi-byte
// characters and comment/section look-alikes.
std::string RandomText(std::mt19937_64& gen) {
  static const std::vector<std::string> pieces = {
      "a", "Z", " ", "  ", "\"", "\\", "\n", "\t", "\r", "#", "[", "]", "=", ",", "é",
      "→", "日本", "\x01", "\x7f", "0", "-", "\\u0041", "[meta]", "# note", "key = \"v\""};
  std::string s;
  const std::size_t len = gen() % 12;
  for (std::size_t i = 0; i < len; ++i) s += pieces[gen() % pieces.size()];
  return s;
}

Canvas RandomCanvas(std::mt19937_64& gen) {
  Canvas c;
  auto present = [&] { return gen() % 4 != 0; };
  VisitCanvasFields(c, [&](std::string_view, std::string_view, auto& field) {
    if (!present()) return;
    using Field = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<Field, std::optional<std::string>>) {
      field = RandomText(gen);
    } else if constexpr (std::is_same_v<Field, std::optional<GoalDirection>>) {
      field = gen() % 2 ? GoalDirection::kMaximize : GoalDirection::kMinimize;
    } else if constexpr (std::is_same_v<Field, std::optional<std::int64_t>>) {
      const std::int64_t edge[] = {0, 1, -1, 30, std::numeric_limits<std::int64_t>::max(),
                                   std::numeric_limits<std::int64_t>::min()};
      field = gen() % 3 ? static_cast<std::int64_t>(gen() % 1000) - 100 : edge[gen() % 6];
    } else {
      std::vector<std::string> items(gen() % 4);
      for (auto& it : items) it = RandomText(gen);
      field = items;
    }
  });
  return c;
}

TEST(ParseCanvas, ChurnFixture) {
  auto c = Churn();
  EXPECT_EQ(c.business_impact.goal_direction, GoalDirection::kMinimize);
  EXPECT_EQ(c.policy_definition.outcome_horizon_days, 30);
  EXPECT_EQ(c.policy_definition.treatment_actions, (std::vector<std::string>{"call"}));
  EXPECT_EQ(c.meta.title, "Retention call optimization");
}

TEST(ParseCanvas, DuplicateKeyNamesLine) {
  const std::string text = "[business_impact]\ngoal = \"a\"\n\ngoal = \"b\"\n";
  try {
    ParseCanvas(text);
    FAIL();
  } catch (const CanvasParseError& e) {
    EXPECT_EQ(e.kind(), CanvasErrorKind::kDuplicateKey);
    EXPECT_EQ(e.line(), 4u);
    EXPECT_NE(std::string(e.what()).find("4"), std::string::npos);
  }
}

TEST(ParseCanvas, ErrorKinds) {
  auto kind_of = [](const std::string& text) {
    try {
      ParseCanvas(text);
    } catch (const CanvasParseError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "no error for: " << text;
    return CanvasErrorKind::kSyntax;
  };
  EXPECT_EQ(kind_of("[nope]\n"), CanvasErrorKind::kUnknownSection);
  EXPECT_EQ(kind_of("[meta]\nauthor = \"x\"\n"), CanvasErrorKind::kUnknownKey);
  EXPECT_EQ(kind_of("[meta]\ngoal = \"x\"\n"), CanvasErrorKind::kUnknownKey);
  EXPECT_EQ(kind_of("[meta]\ntitle = unquoted\n"), CanvasErrorKind::kSyntax);
  EXPECT_EQ(kind_of("title = \"x\"\n"), CanvasErrorKind::kSyntax);
  EXPECT_EQ(kind_of("[meta]\ntitle = \"open\n"), CanvasErrorKind::kSyntax);
  EXPECT_EQ(kind_of("[meta]\ntitle = \"x\" extra\n"), CanvasErrorKind::kSyntax);
  EXPECT_EQ(kind_of("[business_impact]\ngoal_direction = \"sideways\"\n"), CanvasErrorKind::kSyntax);
  EXPECT_EQ(kind_of("[policy_definition]\noutcome_horizon_days = \"30\"\n"), CanvasErrorKind::kSyntax);
  EXPECT_EQ(kind_of("[meta]\n[meta]\n"), CanvasErrorKind::kSyntax);
}

TEST(ParseCanvas, EmptyFileHasTenViolations) {
  auto c = ParseCanvas("");
  EXPECT_EQ(c, Canvas{});
  auto v = ValidateCanvas(c);
  ASSERT_EQ(v.size(), 10u);
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(v[i].cell, CanvasCellNames()[i]);
    EXPECT_EQ(v[i].rule, "R1");
  }
}

TEST(ParseCanvas, CommentsCrlfAndEscapes) {
  const std::string text =
      "# header\r\n[meta]  # trailing\r\n  title = \"a\\\"b\\\\c\\n\\u00e9\"   # c\r\n";
  auto c = ParseCanvas(text);
  EXPECT_EQ(c.meta.title, "a\"b\\c\né");
}

TEST(SerializeCanvas, CanonicalFixtureIsByteStable) {
  const std::string fixture = ReadFixture("churn.canvas");
  EXPECT_EQ(SerializeCanvas(ParseCanvas(fixture)), fixture);
  const std::string conversion = ReadFixture("conversion.canvas");
  EXPECT_EQ(SerializeCanvas(ParseCanvas(conversion)), conversion);
  EXPECT_EQ(SerializeCanvas(Churn()), SerializeCanvas(Churn()));
}

TEST(SerializeCanvas, AbsentCellsEmitSectionHeadersOnly) {
  Canvas c;
  c.business_impact.goal = "g";
  EXPECT_EQ(SerializeCanvas(c),
            "[meta]\n\n[business_impact]\ngoal = \"g\"\n\n[policy_definition]\n\n[policy_validation]\n");
}

TEST(SerializeCanvas, RoundTripProperty) {
  std::mt19937_64 gen(20240601);
  for (int i = 0; i < 2000; ++i) {
    const Canvas c = RandomCanvas(gen);
    const std::string text = SerializeCanvas(c);
    const Canvas back = ParseCanvas(text);
    ASSERT_EQ(back, c) << "case " << i << "\n" << text;
    ASSERT_EQ(SerializeCanvas(back), text);
  }
}

TEST(ValidateCanvas, ChurnFixturePasses) {
  EXPECT_TRUE(ValidateCanvas(Churn()).empty());
  EXPECT_TRUE(ValidateCanvas(ParseCanvas(ReadFixture("conversion.canvas"))).empty());
}

TEST(ValidateCanvas, EachSingleCellDeletionYieldsOneViolation) {
  for (const auto& name : CanvasCellNames()) {
    Canvas c = Churn();
    CanvasCell(c, name)->reset();
    const auto v = ValidateCanvas(c);
    ASSERT_EQ(v.size(), 1u) << name;
    EXPECT_EQ(v[0].cell, name);
    EXPECT_EQ(v[0].rule, "R1");
  }
}

TEST(ValidateCanvas, StructuredRules) {
  Canvas c = Churn();
  c.policy_definition.outcome_horizon_days = 0;
  EXPECT_EQ(ValidateCanvas(c),
            (std::vector<Violation>{{"policy_definition.outcome_horizon_days", "R4",
                                     "outcome_horizon_days must be a positive number of days"}}));
  c = Churn();
  c.business_impact.goal_direction.reset();
  ASSERT_EQ(ValidateCanvas(c).size(), 1u);
  EXPECT_EQ(ValidateCanvas(c)[0].rule, "R2");
  c = Churn();
  c.policy_definition.treatment_actions = std::vector<std::string>{};
  ASSERT_EQ(ValidateCanvas(c).size(), 1u);
  EXPECT_EQ(ValidateCanvas(c)[0].rule, "R3");
  c = Churn();
  c.policy_definition.outcome_keywords = std::vector<std::string>{"revenue"};
  ASSERT_EQ(ValidateCanvas(c).size(), 1u);
  EXPECT_EQ(ValidateCanvas(c)[0].rule, "R5");
  c.policy_definition.outcome_keywords = std::vector<std::string>{"CHURN"};
  EXPECT_TRUE(ValidateCanvas(c).empty());
  c = Churn();
  c.policy_definition.unit_entity = "  ";
  c.policy_definition.unit_decision_moment.reset();
  const auto v = ValidateCanvas(c);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[0].rule, "R6");
  EXPECT_EQ(v[1].cell, "policy_definition.unit_decision_moment");
}

TEST(RenderMarkdown, ThreeColumnsAndDeterministic) {
  const auto md = RenderCanvasMarkdown(Churn());
  EXPECT_NE(md.find("Business Impact"), std::string::npos);
  EXPECT_NE(md.find("Policy Definition"), std::string::npos);
  EXPECT_NE(md.find("Policy Validation"), std::string::npos);
  EXPECT_EQ(md, RenderCanvasMarkdown(Churn()));
  for (const auto& cell : CanvasCellNames()) {
    Canvas c = Churn();
    EXPECT_NE(md.find(**CanvasCell(c, cell)), std::string::npos) << cell;
  }
}

TEST(RenderMarkdown, InvalidCanvasCarriesViolations) {
  Canvas c = Churn();
  c.policy_validation.compliance.reset();
  try {
    RenderCanvasMarkdown(c);
    FAIL();
  } catch (const InvalidCanvasError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidCanvas);
    ASSERT_EQ(e.violations().size(), 1u);
    EXPECT_EQ(e.violations()[0].cell, "policy_validation.compliance");
    EXPECT_EQ(e.violations()[0].rule, "R1");
  }
}

TEST(PipelineConfig, FieldMapping) {
  EXPECT_EQ(CanvasToPipelineConfig(Churn()),
            (PipelineConfig{OutcomeDirection::kLowerIsBetter, 30, {"call"}, "customer"}));
  auto conv = CanvasToPipelineConfig(ParseCanvas(ReadFixture("conversion.canvas")));
  EXPECT_EQ(conv.outcome_direction, OutcomeDirection::kHigherIsBetter);
  Canvas c = Churn();
  c.business_impact.goal_direction.reset();
  EXPECT_THROW(CanvasToPipelineConfig(c), InvalidCanvasError);
}

TEST(Template, ParsesAndListsEveryCell) {
  const auto c = ParseCanvas(CanvasTemplate());
  EXPECT_EQ(ValidateCanvas(c).size(), 10u);
  Canvas copy = c;
  for (const auto& cell : CanvasCellNames()) EXPECT_TRUE(CanvasCell(copy, cell)->has_value()) << cell;
}

}  // namespace
}  // namespace prescriptive
