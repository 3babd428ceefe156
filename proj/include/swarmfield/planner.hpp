#pragma once

#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "swarmfield/error.hpp"
#include "swarmfield/formation.hpp"
#include "swarmfield/model.hpp"

namespace swarmfield {

// ---------------------------------------------------------------------------
// Prompt

inline constexpr std::string_view kCoordinateConvention = "X=forward, Y=left, Z=up";

inline constexpr std::string_view kDefaultSystemTemplate =
    "You are a drone swarm controller for {N} drones. The coordinate system is "
    "{COORDS}. Generate target [x, y, z] coordinates to fulfill the command. "
    "Output only a valid python list of {N} lists. Keep Z >= {Z_FLOOR}";

struct PromptConfig {
  std::size_t n_agents = 1;
  double z_floor = 0.5;
  std::string system_template{kDefaultSystemTemplate};
  std::size_t max_bytes = 64 * 1024;  // 0 disables the budget
};

struct PromptParts {
  std::string system;  // rendered system instruction
  std::string user;    // telemetry + command

  std::string combined() const {
    return "System Instruction:\n" + system + "\n\nCurrent Context:\n" + user;
  }
};

namespace detail {

inline void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = 0; (pos = s.find(from, pos)) != std::string::npos; pos += to.size())
    s.replace(pos, from.size(), to);
}

}  // namespace detail

/// Decimal rendering with at least one digit after the point, at most three
/// (telemetry is rounded to the millimeter): 1 -> "1.0", 0.1234 -> "0.123".
inline std::string format_coordinate(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s(buf);
  while (s.size() > 1 && s.back() == '0' && s[s.size() - 2] != '.') s.pop_back();
  if (s == "-0.0") s = "0.0";
  return s;
}

/// Bracketed list-of-lists, e.g. [[0.1, 0.0, 1.0], [0.0, 1.5, 1.1]].
inline std::string render_matrix(std::span<const Vec3> rows) {
  std::string out = "[";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i) out += ", ";
    out += "[" + format_coordinate(rows[i].x) + ", " + format_coordinate(rows[i].y) + ", " +
           format_coordinate(rows[i].z) + "]";
  }
  return out + "]";
}

inline std::string render_system_instruction(const PromptConfig& config) {
  std::string s = config.system_template;
  detail::replace_all(s, "{COORDS}", kCoordinateConvention);
  detail::replace_all(s, "{N}", std::to_string(config.n_agents));
  detail::replace_all(s, "{Z_FLOOR}", format_coordinate(config.z_floor));
  return s;
}

inline PromptParts build_prompt_parts(const PromptConfig& config, const SwarmSnapshot& snapshot,
                                      std::string_view command_text) {
  if (command_text.empty()) throw InvalidConfig("command text must not be empty");
  const auto positions = snapshot.positions();
  PromptParts parts;
  parts.system = render_system_instruction(config);
  parts.user = "Current Drone Positions:\n" + render_matrix(positions) + "\n\nUser Command:\n" +
               std::string(command_text);
  if (config.max_bytes != 0) {
    const auto size = parts.system.size() + parts.user.size();
    if (size > config.max_bytes)
      throw PromptTooLarge("prompt is " + std::to_string(size) + " bytes, budget " +
                           std::to_string(config.max_bytes));
  }
  return parts;
}

/// Full three-part prompt: system instruction, telemetry, user command.
inline std::string build_prompt(const PromptConfig& config, const SwarmSnapshot& snapshot,
                                std::string_view command_text) {
  return build_prompt_parts(config, snapshot, command_text).combined();
}

// ---------------------------------------------------------------------------
// Waypoint matrix grammar
//
//   matrix := ws '[' ws row (ws ',' ws row)* ws ']' ws
//   row    := '[' ws number (ws ',' ws number)* ws ']'
//   number := [+-]? (digits ('.' digits?)? | '.' digits) ([eE] [+-]? digits)?
//
// Anything else is MalformedOutput. Row count and arity are checked after the
// grammar accepts, so they surface as CountMismatch.

namespace detail {

class MatrixScanner {
public:
  explicit MatrixScanner(std::string_view s) : s_(s) {}

  std::vector<std::vector<double>> parse() {
    std::vector<std::vector<double>> rows;
    skip_ws();
    expect('[');
    skip_ws();
    if (peek() == ']') {
      ++pos_;
    } else {
      for (;;) {
        rows.push_back(row());
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          skip_ws();
          continue;
        }
        expect(']');
        break;
      }
    }
    skip_ws();
    if (pos_ != s_.size()) fail("trailing characters");
    return rows;
  }

private:
  std::vector<double> row() {
    std::vector<double> r;
    expect('[');
    skip_ws();
    if (peek() == ']') {
      ++pos_;
      return r;
    }
    for (;;) {
      r.push_back(number());
      skip_ws();
      if (peek() == ',') {
        ++pos_;
        skip_ws();
        continue;
      }
      expect(']');
      return r;
    }
  }

  double number() {
    const std::size_t start = pos_;
    bool negative = false;
    if (peek() == '+' || peek() == '-') negative = s_[pos_++] == '-';
    if (std::isalpha(static_cast<unsigned char>(peek()))) {
      std::size_t end = pos_;
      while (end < s_.size() && std::isalpha(static_cast<unsigned char>(s_[end]))) ++end;
      std::string word(s_.substr(pos_, end - pos_));
      for (auto& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      if (word == "nan" || word == "inf" || word == "infinity")
        throw NonFinite("non-finite literal at offset " + std::to_string(start));
      fail("expected a number");
    }
    const std::size_t body = pos_;
    const std::size_t int_digits = digits();
    std::size_t frac_digits = 0;
    if (peek() == '.') {
      ++pos_;
      frac_digits = digits();
    }
    if (int_digits == 0 && frac_digits == 0) fail("expected a number");
    if (peek() == 'e' || peek() == 'E') {
      ++pos_;
      if (peek() == '+' || peek() == '-') ++pos_;
      if (digits() == 0) fail("malformed exponent");
    }
    // from_chars rejects a leading '+' and a bare trailing '.', so hand it a
    // normalized copy
    std::string text(s_.substr(body, pos_ - body));
    if (auto dot = text.find('.');
        dot != std::string::npos && (dot + 1 == text.size() || !std::isdigit(static_cast<unsigned char>(text[dot + 1]))))
      text.insert(dot + 1, "0");
    if (!text.empty() && text.front() == '.') text.insert(0, "0");
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec == std::errc::result_out_of_range) {
      // magnitude overflow or underflow: decide which by the exponent sign
      const auto e = text.find_first_of("eE");
      const bool tiny = e != std::string::npos && text.find('-', e) != std::string::npos;
      if (!tiny) throw NonFinite("literal overflows a double at offset " + std::to_string(start));
      v = 0.0;
    } else if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
      fail("unreadable number");
    }
    if (!std::isfinite(v)) throw NonFinite("non-finite literal at offset " + std::to_string(start));
    return negative ? -v : v;
  }

  std::size_t digits() {
    std::size_t n = 0;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_, ++n;
    return n;
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  char peek() const { return pos_ < s_.size() ? s_[pos_] : '\0'; }

  void expect(char c) {
    if (peek() != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw MalformedOutput(what + " at offset " + std::to_string(pos_));
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Lenient pre-pass: keep the inside of the first ``` fenced block if there
// is one, then drop leading lines not starting with '[' and trailing lines
// not ending with ']'.
inline std::string strip_wrapping(std::string_view raw) {
  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start <= raw.size();) {
    auto end = raw.find('\n', start);
    if (end == std::string_view::npos) end = raw.size();
    lines.push_back(raw.substr(start, end - start));
    start = end + 1;
  }
  std::size_t first = 0, last = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).starts_with("```")) {
      for (std::size_t j = i + 1; j < lines.size(); ++j)
        if (trim(lines[j]).starts_with("```")) {
          first = i + 1;
          last = j;
          break;
        }
      break;
    }
  }
  while (first < last && !trim(lines[first]).starts_with('[')) ++first;
  while (last > first && !trim(lines[last - 1]).ends_with(']')) --last;
  std::string out;
  for (std::size_t i = first; i < last; ++i) {
    out += lines[i];
    out += '\n';
  }
  return out;
}

}  // namespace detail

/// Parses an N x 3 goal matrix. Strict mode admits the bare literal only;
/// lenient mode first strips one code fence and surrounding prose lines.
inline std::vector<Vec3> parse_waypoint_matrix(std::string_view raw, std::size_t n,
                                               bool lenient = false) {
  const std::string stripped = lenient ? detail::strip_wrapping(raw) : std::string();
  const auto rows = detail::MatrixScanner(lenient ? std::string_view(stripped) : raw).parse();
  if (rows.size() != n)
    throw CountMismatch("expected " + std::to_string(n) + " rows, got " +
                        std::to_string(rows.size()));
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != 3)
      throw CountMismatch("row " + std::to_string(i) + " has " + std::to_string(rows[i].size()) +
                          " values, expected 3");
    out.push_back({rows[i][0], rows[i][1], rows[i][2]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fence validation

/// Whole-plan check: any goal outside the fence turns the plan into a hold
/// at the snapshot positions. Never partially clamps.
inline WaypointPlan validate_plan(std::vector<Vec3> goals, const SwarmSnapshot& snapshot,
                                  const GeoFence& fence, PlanSource source = PlanSource::llm,
                                  std::string command_text = {}) {
  if (goals.size() != snapshot.size())
    throw CountMismatch("plan has " + std::to_string(goals.size()) + " goals for " +
                        std::to_string(snapshot.size()) + " agents");
  for (std::size_t i = 0; i < goals.size(); ++i) {
    if (auto v = fence.violation(goals[i]); !v.empty())
      return WaypointPlan::hold(snapshot, std::move(command_text),
                                "agent " + std::to_string(i) + " goal outside fence: " + v);
  }
  return {std::move(goals), source, std::move(command_text), true, std::nullopt};
}

// ---------------------------------------------------------------------------
// Planner interface

enum class PlanOutcome { ok, timeout, malformed, fence_rejected, infeasible };

inline std::string_view to_string(PlanOutcome o) noexcept {
  switch (o) {
    case PlanOutcome::ok: return "ok";
    case PlanOutcome::timeout: return "timeout";
    case PlanOutcome::malformed: return "malformed";
    case PlanOutcome::fence_rejected: return "fence_rejected";
    case PlanOutcome::infeasible: return "infeasible";
  }
  return "malformed";
}

inline PlanOutcome plan_outcome_from_string(std::string_view s) {
  for (auto o : {PlanOutcome::ok, PlanOutcome::timeout, PlanOutcome::malformed,
                 PlanOutcome::fence_rejected, PlanOutcome::infeasible})
    if (to_string(o) == s) return o;
  throw SchemaMismatch("unknown plan outcome '" + std::string(s) + "'");
}

struct PlannerResult {
  WaypointPlan plan;
  std::string raw_response;
  double latency = 0.0;  // seconds
  PlanOutcome outcome = PlanOutcome::ok;
  std::string error_code;  // Error::code() of the failure, empty when ok
};

/// One operator command. Structured variants (formation, swap, goals) are
/// served by the formation oracle; free text needs a language model.
struct PlanCommand {
  std::optional<FormationSpec> formation;
  bool swap = false;
  std::optional<std::vector<Vec3>> goals;
  std::string text;

  bool structured() const noexcept { return formation.has_value() || swap || goals.has_value(); }

  std::string describe() const {
    if (formation) return "formation " + std::string(to_string(formation->shape));
    if (swap) return "swap";
    if (goals) return "goals";
    return text;
  }
};

/// Hold result carrying the failure reason.
inline PlannerResult hold_result(const SwarmSnapshot& snapshot, std::string command_text,
                                 PlanOutcome outcome, const std::string& code,
                                 const std::string& reason) {
  PlannerResult r;
  r.plan = WaypointPlan::hold(snapshot, std::move(command_text), code + ": " + reason);
  r.outcome = outcome;
  r.error_code = code;
  return r;
}

class Planner {
public:
  virtual ~Planner() = default;
  /// Never throws for planning failures; those come back as hold results.
  virtual PlannerResult plan(const PlanCommand& command, const SwarmSnapshot& snapshot) = 0;
};

/// Deterministic geometric planner. Latency is reported as 0: it resolves
/// within the tick the command is issued.
class OraclePlanner : public Planner {
public:
  OraclePlanner(GeoFence fence, double r_min) : fence_(fence), r_min_(r_min) {}

  PlannerResult plan(const PlanCommand& command, const SwarmSnapshot& snapshot) override {
    const std::string text = command.describe();
    try {
      PlannerResult r;
      if (command.formation) {
        r.plan = plan_formation(*command.formation, snapshot, fence_, r_min_);
      } else if (command.swap) {
        r.plan = swap_targets(snapshot);
      } else if (command.goals) {
        r.plan = validate_plan(*command.goals, snapshot, fence_, PlanSource::oracle, text);
        if (r.plan.source == PlanSource::hold) {
          r.outcome = PlanOutcome::fence_rejected;
          r.error_code = "FenceViolation";
        }
        return r;
      } else {
        return hold_result(snapshot, text, PlanOutcome::infeasible, "InvalidConfig",
                           "text commands need the llm planner");
      }
      if (auto bad = first_violation(r.plan); !bad.empty())
        return hold_result(snapshot, text, PlanOutcome::fence_rejected, "FenceViolation", bad);
      return r;
    } catch (const FenceViolation& e) {
      return hold_result(snapshot, text, PlanOutcome::fence_rejected, e.code(), e.what());
    } catch (const Error& e) {
      return hold_result(snapshot, text, PlanOutcome::infeasible, e.code(), e.what());
    }
  }

private:
  std::string first_violation(const WaypointPlan& plan) const {
    for (std::size_t i = 0; i < plan.goals.size(); ++i)
      if (auto v = fence_.violation(plan.goals[i]); !v.empty())
        return "agent " + std::to_string(i) + " goal outside fence: " + v;
    return {};
  }

  GeoFence fence_;
  double r_min_;
};

}  // namespace swarmfield
