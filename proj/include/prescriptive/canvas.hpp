#pragma once

// Prescriptive Canvas documents.
//
// On-disk grammar (UTF-8, LF):
//
//   file    := { line '\n' }
//   line    := blank | comment | section | entry
//   comment := '#' { any }
//   section := '[' name ']' [ comment ]
//   entry   := key '=' value [ comment ]
//   value   := string | integer | list
//   string  := '"' { char | '\"' | '\\' | '\n' | '\t' | '\r' | '\uXXXX' } '"'
//   integer := [ '-' ] digit { digit }
//   list    := '[' [ string { ',' string } ] ']'
//
// Sections and keys, in canonical order:
//
//   [meta]               title
//   [business_impact]    goal, goal_metric, goal_direction, action, decision
//   [policy_definition]  unit, unit_entity, unit_decision_moment, treatment,
//                        treatment_actions, outcomes, outcome_horizon_days,
//                        outcome_keywords
//   [policy_validation]  evaluation_metrics, tracking, compliance, delivery
//
// goal_direction is "maximize" or "minimize"; outcome_horizon_days is an
// integer; treatment_actions and outcome_keywords are lists of strings.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "prescriptive/common.hpp"

namespace prescriptive {

enum class GoalDirection { kMaximize, kMinimize };

struct CanvasMeta {
  std::optional<std::string> title;
  bool operator==(const CanvasMeta&) const = default;
};

struct BusinessImpact {
  std::optional<std::string> goal;
  std::optional<std::string> goal_metric;
  std::optional<GoalDirection> goal_direction;
  std::optional<std::string> action;
  std::optional<std::string> decision;
  bool operator==(const BusinessImpact&) const = default;
};

struct PolicyDefinition {
  std::optional<std::string> unit;
  std::optional<std::string> unit_entity;
  std::optional<std::string> unit_decision_moment;
  std::optional<std::string> treatment;
  std::optional<std::vector<std::string>> treatment_actions;
  std::optional<std::string> outcomes;
  std::optional<std::int64_t> outcome_horizon_days;
  std::optional<std::vector<std::string>> outcome_keywords;
  bool operator==(const PolicyDefinition&) const = default;
};

struct PolicyValidation {
  std::optional<std::string> evaluation_metrics;
  std::optional<std::string> tracking;
  std::optional<std::string> compliance;
  std::optional<std::string> delivery;
  bool operator==(const PolicyValidation&) const = default;
};

struct Canvas {
  CanvasMeta meta;
  BusinessImpact business_impact;
  PolicyDefinition policy_definition;
  PolicyValidation policy_validation;
  bool operator==(const Canvas&) const = default;
};

// Calls f(section, key, field) for every field in canonical order. Works for
// const and non-const canvases.
template <class C, class F>
void VisitCanvasFields(C& c, F&& f) {
  f("meta", "title", c.meta.title);
  f("business_impact", "goal", c.business_impact.goal);
  f("business_impact", "goal_metric", c.business_impact.goal_metric);
  f("business_impact", "goal_direction", c.business_impact.goal_direction);
  f("business_impact", "action", c.business_impact.action);
  f("business_impact", "decision", c.business_impact.decision);
  f("policy_definition", "unit", c.policy_definition.unit);
  f("policy_definition", "unit_entity", c.policy_definition.unit_entity);
  f("policy_definition", "unit_decision_moment", c.policy_definition.unit_decision_moment);
  f("policy_definition", "treatment", c.policy_definition.treatment);
  f("policy_definition", "treatment_actions", c.policy_definition.treatment_actions);
  f("policy_definition", "outcomes", c.policy_definition.outcomes);
  f("policy_definition", "outcome_horizon_days", c.policy_definition.outcome_horizon_days);
  f("policy_definition", "outcome_keywords", c.policy_definition.outcome_keywords);
  f("policy_validation", "evaluation_metrics", c.policy_validation.evaluation_metrics);
  f("policy_validation", "tracking", c.policy_validation.tracking);
  f("policy_validation", "compliance", c.policy_validation.compliance);
  f("policy_validation", "delivery", c.policy_validation.delivery);
}

inline constexpr std::string_view kCanvasSections[] = {"meta", "business_impact",
                                                       "policy_definition", "policy_validation"};

// The ten free-text cells, as "section.key".
inline const std::vector<std::string>& CanvasCellNames() {
  static const std::vector<std::string> names = {
      "business_impact.goal",         "business_impact.action",
      "business_impact.decision",     "policy_definition.unit",
      "policy_definition.treatment",  "policy_definition.outcomes",
      "policy_validation.evaluation_metrics", "policy_validation.tracking",
      "policy_validation.compliance", "policy_validation.delivery"};
  return names;
}

// Pointer to one of the ten cells by "section.key", or nullptr.
inline std::optional<std::string>* CanvasCell(Canvas& c, std::string_view name) {
  std::optional<std::string>* out = nullptr;
  VisitCanvasFields(c, [&](std::string_view section, std::string_view key, auto& field) {
    if constexpr (std::is_same_v<std::decay_t<decltype(field)>, std::optional<std::string>>) {
      if (name.size() == section.size() + 1 + key.size() && name.substr(0, section.size()) == section &&
          name[section.size()] == '.' && name.substr(section.size() + 1) == key) {
        out = &field;
      }
    }
  });
  return out;
}

enum class CanvasErrorKind { kSyntax, kUnknownSection, kUnknownKey, kDuplicateKey };

class CanvasParseError : public Error {
 public:
  CanvasParseError(CanvasErrorKind kind, std::size_t line, const std::string& message)
      : Error(ErrorCode::kParse, KindName(kind) + " at line " + std::to_string(line) + ": " + message),
        kind_(kind),
        line_(line) {}

  CanvasErrorKind kind() const noexcept { return kind_; }
  std::size_t line() const noexcept { return line_; }

 private:
  static std::string KindName(CanvasErrorKind k) {
    switch (k) {
      case CanvasErrorKind::kSyntax: return "SyntaxError";
      case CanvasErrorKind::kUnknownSection: return "UnknownSection";
      case CanvasErrorKind::kUnknownKey: return "UnknownKey";
      case CanvasErrorKind::kDuplicateKey: return "DuplicateKey";
    }
    return "?";
  }

  CanvasErrorKind kind_;
  std::size_t line_;
};

namespace detail {

inline void AppendUtf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

inline std::string QuoteCanvasString(std::string_view s) {
  std::string out = "\"";
  for (unsigned char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (ch < 0x20 || ch == 0x7F) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", ch);
          out += buf;
        } else {
          out += static_cast<char>(ch);
        }
    }
  }
  out += '"';
  return out;
}

class CanvasLineParser {
 public:
  CanvasLineParser(std::string_view text, std::size_t line) : s_(text), line_(line) {}

  void SkipSpace() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool AtEnd() {
    SkipSpace();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  char Peek() {
    SkipSpace();
    return pos_ < s_.size() ? s_[pos_] : '\0';
  }

  void Expect(char c) {
    if (Peek() != c) Fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  std::string Identifier() {
    SkipSpace();
    const std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
      ++pos_;
    }
    if (pos_ == start) Fail("expected a name");
    return std::string(s_.substr(start, pos_ - start));
  }

  std::string String() {
    Expect('"');
    std::string out;
    while (true) {
      if (pos_ >= s_.size()) Fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') break;
      if (c != '\\') {
        out += c;
        continue;
      }
      if (pos_ >= s_.size()) Fail("dangling escape");
      const char e = s_[pos_++];
      switch (e) {
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case 'r': out += '\r'; break;
        case 'u': {
          if (pos_ + 4 > s_.size()) Fail("short \\u escape");
          std::uint32_t cp = 0;
          for (int k = 0; k < 4; ++k) {
            const char h = s_[pos_++];
            cp <<= 4;
            if (h >= '0' && h <= '9') cp |= static_cast<std::uint32_t>(h - '0');
            else if (h >= 'a' && h <= 'f') cp |= static_cast<std::uint32_t>(h - 'a' + 10);
            else if (h >= 'A' && h <= 'F') cp |= static_cast<std::uint32_t>(h - 'A' + 10);
            else Fail("bad hex digit in \\u escape");
          }
          AppendUtf8(out, cp);
          break;
        }
        default: Fail(std::string("unknown escape \\") + e);
      }
    }
    return out;
  }

  std::int64_t Integer() {
    SkipSpace();
    const std::size_t start = pos_;
    if (pos_ < s_.size() && s_[pos_] == '-') ++pos_;
    const std::size_t digits = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (pos_ == digits) Fail("expected an integer");
    try {
      return std::stoll(std::string(s_.substr(start, pos_ - start)));
    } catch (const std::exception&) {
      Fail("integer out of range");
    }
    return 0;
  }

  std::vector<std::string> List() {
    Expect('[');
    std::vector<std::string> items;
    if (Peek() == ']') {
      ++pos_;
      return items;
    }
    while (true) {
      items.push_back(String());
      if (Peek() == ',') {
        ++pos_;
        continue;
      }
      Expect(']');
      return items;
    }
  }

  void ExpectEnd() {
    if (!AtEnd()) Fail("unexpected trailing text");
  }

  [[noreturn]] void Fail(const std::string& message) const {
    throw CanvasParseError(CanvasErrorKind::kSyntax, line_, message);
  }

 private:
  std::string_view s_;
  std::size_t pos_ = 0;
  std::size_t line_;
};

inline std::string FormatList(const std::vector<std::string>& items) {
  std::string out = "[";
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += QuoteCanvasString(items[i]);
  }
  return out + "]";
}

inline const char* GoalDirectionName(GoalDirection d) {
  return d == GoalDirection::kMaximize ? "maximize" : "minimize";
}

}  // namespace detail

// Parses canvas text. Missing keys stay absent; validation decides whether
// that is acceptable.
inline Canvas ParseCanvas(std::string_view text) {
  Canvas canvas;
  std::string section;
  std::set<std::string> seen_sections;
  std::set<std::string> seen_keys;
  std::size_t lineno = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    detail::CanvasLineParser p(line, lineno);
    if (p.AtEnd()) {
      if (end == text.size()) break;
      continue;
    }
    if (p.Peek() == '[') {
      p.Expect('[');
      const std::string name = p.Identifier();
      p.Expect(']');
      p.ExpectEnd();
      if (std::find(std::begin(kCanvasSections), std::end(kCanvasSections), name) ==
          std::end(kCanvasSections)) {
        throw CanvasParseError(CanvasErrorKind::kUnknownSection, lineno,
                               "unknown section [" + name + "]");
      }
      if (!seen_sections.insert(name).second) {
        throw CanvasParseError(CanvasErrorKind::kSyntax, lineno,
                               "section [" + name + "] appears twice");
      }
      section = name;
    } else {
      const std::string key = p.Identifier();
      p.Expect('=');
      if (section.empty()) p.Fail("entry '" + key + "' before any section header");
      bool known = false;
      VisitCanvasFields(canvas, [&](std::string_view sec, std::string_view k, auto&) {
        known |= sec == section && k == key;
      });
      if (!known) {
        throw CanvasParseError(CanvasErrorKind::kUnknownKey, lineno,
                               "unknown key '" + key + "' in [" + section + "]");
      }
      if (!seen_keys.insert(section + "." + key).second) {
        throw CanvasParseError(CanvasErrorKind::kDuplicateKey, lineno,
                               "duplicate key '" + key + "' in [" + section + "]");
      }
      bool found = false;
      VisitCanvasFields(canvas, [&](std::string_view sec, std::string_view k, auto& field) {
        if (found || sec != section || k != key) return;
        found = true;
        using Field = std::decay_t<decltype(field)>;
        if constexpr (std::is_same_v<Field, std::optional<std::string>>) {
          field = p.String();
        } else if constexpr (std::is_same_v<Field, std::optional<GoalDirection>>) {
          const std::string v = p.String();
          if (v == "maximize") field = GoalDirection::kMaximize;
          else if (v == "minimize") field = GoalDirection::kMinimize;
          else p.Fail("goal_direction must be \"maximize\" or \"minimize\"");
        } else if constexpr (std::is_same_v<Field, std::optional<std::int64_t>>) {
          field = p.Integer();
        } else {
          field = p.List();
        }
        p.ExpectEnd();
      });
    }
    if (end == text.size()) break;
  }
  return canvas;
}

// Canonical text: every section header in fixed order, present keys only.
inline std::string SerializeCanvas(const Canvas& canvas) {
  std::string out;
  std::string current;
  for (std::string_view section : kCanvasSections) {
    if (!out.empty()) out += '\n';
    out += "[" + std::string(section) + "]\n";
    VisitCanvasFields(canvas, [&](std::string_view sec, std::string_view key, const auto& field) {
      if (sec != section || !field) return;
      using Field = std::decay_t<decltype(field)>;
      out += std::string(key) + " = ";
      if constexpr (std::is_same_v<Field, std::optional<std::string>>) {
        out += detail::QuoteCanvasString(*field);
      } else if constexpr (std::is_same_v<Field, std::optional<GoalDirection>>) {
        out += detail::QuoteCanvasString(detail::GoalDirectionName(*field));
      } else if constexpr (std::is_same_v<Field, std::optional<std::int64_t>>) {
        out += std::to_string(*field);
      } else {
        out += detail::FormatList(*field);
      }
      out += '\n';
    });
  }
  return out;
}

struct Violation {
  std::string cell;
  std::string rule;
  std::string message;
  bool operator==(const Violation&) const = default;
};

namespace detail {

inline bool Blank(const std::optional<std::string>& s) {
  return !s || std::all_of(s->begin(), s->end(),
                           [](unsigned char c) { return std::isspace(c) != 0; });
}

inline std::string Lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

// Rules:
//   R1 each of the ten cells is present and non-blank;
//   R2 a stated goal carries goal_direction;
//   R3 a stated treatment lists at least one action;
//   R4 stated outcomes carry a positive outcome_horizon_days;
//   R5 evaluation_metrics mentions a declared outcome keyword;
//   R6 a stated unit names its entity and decision moment.
// Structured rules apply only when their cell is present, so a missing cell
// yields exactly one violation.
inline std::vector<Violation> ValidateCanvas(const Canvas& c) {
  std::vector<Violation> out;
  Canvas copy = c;
  for (const auto& name : CanvasCellNames()) {
    if (detail::Blank(*CanvasCell(copy, name))) {
      out.push_back({name, "R1", "cell is missing or empty"});
    }
  }
  const auto& bi = c.business_impact;
  const auto& pd = c.policy_definition;
  const auto& pv = c.policy_validation;
  if (!detail::Blank(bi.goal) && !bi.goal_direction) {
    out.push_back({"business_impact.goal_direction", "R2",
                   "goal_direction must be \"maximize\" or \"minimize\""});
  }
  if (!detail::Blank(pd.treatment)) {
    const bool any = pd.treatment_actions &&
                     std::any_of(pd.treatment_actions->begin(), pd.treatment_actions->end(),
                                 [](const std::string& a) { return !detail::Blank(a); });
    if (!any) {
      out.push_back({"policy_definition.treatment_actions", "R3",
                     "at least one treatment action is required"});
    }
  }
  if (!detail::Blank(pd.outcomes) &&
      !(pd.outcome_horizon_days && *pd.outcome_horizon_days >= 1)) {
    out.push_back({"policy_definition.outcome_horizon_days", "R4",
                   "outcome_horizon_days must be a positive number of days"});
  }
  if (!detail::Blank(pv.evaluation_metrics)) {
    const std::string metrics = detail::Lower(*pv.evaluation_metrics);
    bool mentioned = false;
    if (pd.outcome_keywords) {
      for (const auto& kw : *pd.outcome_keywords) {
        if (!detail::Blank(kw) && metrics.find(detail::Lower(kw)) != std::string::npos) {
          mentioned = true;
        }
      }
    }
    if (!mentioned) {
      out.push_back({"policy_validation.evaluation_metrics", "R5",
                     "evaluation metrics mention none of the declared outcome_keywords"});
    }
  }
  if (!detail::Blank(pd.unit)) {
    if (detail::Blank(pd.unit_entity)) {
      out.push_back({"policy_definition.unit_entity", "R6", "unit needs an entity"});
    }
    if (detail::Blank(pd.unit_decision_moment)) {
      out.push_back({"policy_definition.unit_decision_moment", "R6",
                     "unit needs a decision moment"});
    }
  }
  return out;
}

class InvalidCanvasError : public Error {
 public:
  explicit InvalidCanvasError(std::vector<Violation> violations)
      : Error(ErrorCode::kInvalidCanvas, Summary(violations)), violations_(std::move(violations)) {}

  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  static std::string Summary(const std::vector<Violation>& v) {
    std::string s = std::to_string(v.size()) + " violation(s)";
    for (const auto& x : v) s += "; " + x.rule + " " + x.cell;
    return s;
  }

  std::vector<Violation> violations_;
};

inline void RequireValidCanvas(const Canvas& c) {
  auto violations = ValidateCanvas(c);
  if (!violations.empty()) throw InvalidCanvasError(std::move(violations));
}

namespace detail {

inline std::string MarkdownCell(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '|') out += "\\|";
    else if (c == '\n') out += "<br>";
    else if (c == '\r') continue;
    else out += c;
  }
  return out;
}

inline std::string JoinList(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += ", ";
    out += items[i];
  }
  return out;
}

}  // namespace detail

// Three-column Markdown table: business impact, policy definition, policy
// validation.
inline std::string RenderCanvasMarkdown(const Canvas& c) {
  RequireValidCanvas(c);
  using detail::MarkdownCell;
  const auto& bi = c.business_impact;
  const auto& pd = c.policy_definition;
  const auto& pv = c.policy_validation;
  const std::string title =
      detail::Blank(c.meta.title) ? std::string("Untitled") : MarkdownCell(*c.meta.title);

  std::string goal = "**Goal**: " + MarkdownCell(*bi.goal);
  if (!detail::Blank(bi.goal_metric)) goal += "<br>KPI: " + MarkdownCell(*bi.goal_metric);
  goal += std::string("<br>Direction: ") + detail::GoalDirectionName(*bi.goal_direction);
  const std::string unit = "**Unit**: " + MarkdownCell(*pd.unit) +
                           "<br>Entity: " + MarkdownCell(*pd.unit_entity) +
                           "<br>Decision moment: " + MarkdownCell(*pd.unit_decision_moment);
  const std::string treatment = "**Treatment**: " + MarkdownCell(*pd.treatment) +
                                "<br>Actions: " + MarkdownCell(detail::JoinList(*pd.treatment_actions));
  const std::string outcomes = "**Outcomes**: " + MarkdownCell(*pd.outcomes) + "<br>Horizon: " +
                               std::to_string(*pd.outcome_horizon_days) + " days";

  const std::string rows[4][3] = {
      {goal, unit, "**Evaluation metrics**: " + MarkdownCell(*pv.evaluation_metrics)},
      {"**Action**: " + MarkdownCell(*bi.action), treatment,
       "**Tracking**: " + MarkdownCell(*pv.tracking)},
      {"**Decision**: " + MarkdownCell(*bi.decision), outcomes,
       "**Compliance**: " + MarkdownCell(*pv.compliance)},
      {"", "", "**Delivery**: " + MarkdownCell(*pv.delivery)},
  };
  std::string out = "# Prescriptive Canvas: " + title + "\n\n";
  out += "| Business Impact | Policy Definition | Policy Validation |\n";
  out += "| --- | --- | --- |\n";
  for (const auto& row : rows) {
    out += "| " + row[0] + " | " + row[1] + " | " + row[2] + " |\n";
  }
  return out;
}

struct PipelineConfig {
  OutcomeDirection outcome_direction = OutcomeDirection::kHigherIsBetter;
  std::int64_t horizon_days = 0;
  std::vector<std::string> action_set;
  std::string unit_key;
  bool operator==(const PipelineConfig&) const = default;
};

inline PipelineConfig CanvasToPipelineConfig(const Canvas& c) {
  RequireValidCanvas(c);
  PipelineConfig config;
  config.outcome_direction = *c.business_impact.goal_direction == GoalDirection::kMaximize
                                 ? OutcomeDirection::kHigherIsBetter
                                 : OutcomeDirection::kLowerIsBetter;
  config.horizon_days = *c.policy_definition.outcome_horizon_days;
  config.action_set = *c.policy_definition.treatment_actions;
  config.unit_key = *c.policy_definition.unit_entity;
  return config;
}

inline nlohmann::json ToJson(const PipelineConfig& p) {
  return {{"outcome_direction", DirectionName(p.outcome_direction)},
          {"horizon_days", p.horizon_days},
          {"action_set", p.action_set},
          {"unit_key", p.unit_key}};
}

inline nlohmann::json ToJson(const std::vector<Violation>& violations) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& v : violations) {
    out.push_back({{"cell", v.cell}, {"rule", v.rule}, {"message", v.message}});
  }
  return out;
}

// Blank canvas with a hint comment above every key.
inline std::string CanvasTemplate() {
  return R"(# Prescriptive Canvas. Fill every value, then run `canvas validate`.

[meta]
# Project name.
title = ""

[business_impact]
# The single aggregate KPI the new policy is judged on.
goal = ""
# Name of that KPI, e.g. "monthly churn rate".
goal_metric = ""
# "maximize" or "minimize".
goal_direction = "minimize"
# The lever you control that moves the KPI, and what can interfere with it.
action = ""
# The existing decision process the policy changes or replaces, and the
# information it uses today.
decision = ""

[policy_definition]
# One row of the model: which entity, at which moment, and who is eligible.
unit = ""
unit_entity = ""
unit_decision_moment = ""
# Actions the policy may prescribe and how logged actions map onto them.
treatment = ""
treatment_actions = []
# Per-unit metric measured from the decision moment.
outcomes = ""
outcome_horizon_days = 30
# Terms the evaluation metrics must mention, e.g. ["churn"].
outcome_keywords = []

[policy_validation]
# Measurable metrics (or proxies) computed from the outcome.
evaluation_metrics = ""
# How decisions and performed actions are logged against policy output.
tracking = ""
# How performed actions are compared with decisions, and the expected sources
# of deviation.
compliance = ""
# How and when decisions reach the people or systems that act on them.
delivery = ""
)";
}

}  // namespace prescriptive
