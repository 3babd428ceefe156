#pragma once

// JSONL run log. One object per line, discriminated by "type":
//
//   header  first line; scenario identity, params, fence
//   plan    a planner result adopted (or superseded) at a tick boundary
//   tick    one TickRecord
//   timing  realtime pacing statistics, last line, realtime runs only
//
// Doubles are written in shortest round-trip form, so decoding a line gives
// back the exact bits that were encoded.

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "swarmfield/error.hpp"
#include "swarmfield/model.hpp"
#include "swarmfield/planner.hpp"

namespace swarmfield {

inline constexpr int kLogSchemaVersion = 1;
inline constexpr std::string_view kLogSchemaName = "swarmfield.log";

using nlohmann::json;

inline json to_json_value(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

inline json to_json_value(std::span<const Vec3> vs) {
  json a = json::array();
  for (const auto& v : vs) a.push_back(to_json_value(v));
  return a;
}

inline Vec3 vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3 || !j[0].is_number() || !j[1].is_number() ||
      !j[2].is_number())
    throw SchemaMismatch("expected [x, y, z]");
  Vec3 v{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
  if (!is_finite(v)) throw NonFinite("non-finite coordinate");
  return v;
}

inline std::vector<Vec3> vec3_list_from_json(const json& j) {
  if (!j.is_array()) throw SchemaMismatch("expected a list of [x, y, z]");
  std::vector<Vec3> out;
  out.reserve(j.size());
  for (const auto& e : j) out.push_back(vec3_from_json(e));
  return out;
}

inline json to_json_value(const ControllerParams& p) {
  return {{"k_p", p.k_p},
          {"k_rep", p.k_rep},
          {"r_min", p.r_min},
          {"v_max", p.v_max},
          {"dt", p.dt},
          {"r_drone", p.r_drone},
          {"collision_dist", p.collision_dist},
          {"escape_enabled", p.escape_enabled},
          {"escape_speed", p.escape_speed},
          {"escape_stall_ticks", p.escape_stall_ticks},
          {"stall_speed", p.stall_speed},
          {"goal_tolerance", p.goal_tolerance}};
}

/// Overlays the keys present in `j` onto `base`. Unknown keys are an error.
inline ControllerParams params_from_json(const json& j, ControllerParams base = {}) {
  if (!j.is_object()) throw SchemaMismatch("params must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "k_p") base.k_p = value.get<double>();
    else if (key == "k_rep") base.k_rep = value.get<double>();
    else if (key == "r_min") base.r_min = value.get<double>();
    else if (key == "v_max") base.v_max = value.get<double>();
    else if (key == "dt") base.dt = value.get<double>();
    else if (key == "r_drone") base.r_drone = value.get<double>();
    else if (key == "collision_dist") base.collision_dist = value.get<double>();
    else if (key == "escape_enabled") base.escape_enabled = value.get<bool>();
    else if (key == "escape_speed") base.escape_speed = value.get<double>();
    else if (key == "escape_stall_ticks") base.escape_stall_ticks = value.get<int>();
    else if (key == "stall_speed") base.stall_speed = value.get<double>();
    else if (key == "goal_tolerance") base.goal_tolerance = value.get<double>();
    else throw SchemaMismatch("unknown params key '" + key + "'");
  }
  return base;
}

inline json to_json_value(const GeoFence& f) {
  return {{"x_min", f.x_min}, {"x_max", f.x_max}, {"y_min", f.y_min},
          {"y_max", f.y_max}, {"z_min", f.z_min}, {"z_max", f.z_max},
          {"prompt_z_floor", f.prompt_z_floor}};
}

inline GeoFence fence_from_json(const json& j, GeoFence base = {}) {
  if (!j.is_object()) throw SchemaMismatch("fence must be an object");
  for (const auto& [key, value] : j.items()) {
    if (key == "x_min") base.x_min = value.get<double>();
    else if (key == "x_max") base.x_max = value.get<double>();
    else if (key == "y_min") base.y_min = value.get<double>();
    else if (key == "y_max") base.y_max = value.get<double>();
    else if (key == "z_min") base.z_min = value.get<double>();
    else if (key == "z_max") base.z_max = value.get<double>();
    else if (key == "prompt_z_floor") base.prompt_z_floor = value.get<double>();
    else throw SchemaMismatch("unknown fence key '" + key + "'");
  }
  return base;
}

// ---------------------------------------------------------------------------

struct RunHeader {
  std::string scenario;
  std::size_t n_agents = 0;
  std::uint64_t seed = 0;
  ControllerParams params;
  GeoFence fence;
  bool expect_converge = true;
  bool realtime = false;

  friend bool operator==(const RunHeader&, const RunHeader&) = default;
};

inline json to_json_value(const RunHeader& h) {
  return {{"type", "header"},
          {"schema", kLogSchemaName},
          {"version", kLogSchemaVersion},
          {"scenario", h.scenario},
          {"n_agents", h.n_agents},
          {"seed", h.seed},
          {"params", to_json_value(h.params)},
          {"fence", to_json_value(h.fence)},
          {"expect_converge", h.expect_converge},
          {"realtime", h.realtime}};
}

inline RunHeader header_from_json(const json& j) {
  if (j.value("type", "") != "header" || j.value("schema", "") != kLogSchemaName)
    throw SchemaMismatch("first line is not a swarmfield log header");
  if (j.value("version", 0) != kLogSchemaVersion)
    throw SchemaMismatch("unsupported log version " + std::to_string(j.value("version", 0)));
  RunHeader h;
  h.scenario = j.at("scenario").get<std::string>();
  h.n_agents = j.at("n_agents").get<std::size_t>();
  h.seed = j.at("seed").get<std::uint64_t>();
  h.params = params_from_json(j.at("params"));
  h.fence = fence_from_json(j.at("fence"));
  h.expect_converge = j.at("expect_converge").get<bool>();
  h.realtime = j.at("realtime").get<bool>();
  return h;
}

/// A planner result as it reached the control loop.
struct PlanEvent {
  std::uint64_t tick = 0;  // tick boundary at which it was adopted
  std::string status = "adopted";  // adopted | superseded
  PlanSource source = PlanSource::hold;
  PlanOutcome outcome = PlanOutcome::ok;
  bool accepted = true;
  std::string command_text;
  std::optional<std::string> rejection_reason;
  std::string error_code;
  double latency = 0.0;
  std::string raw_response;
  std::vector<Vec3> goals;

  static PlanEvent from_result(std::uint64_t tick, const PlannerResult& r,
                               std::string status = "adopted") {
    return {tick,
            std::move(status),
            r.plan.source,
            r.outcome,
            r.plan.accepted,
            r.plan.command_text,
            r.plan.rejection_reason,
            r.error_code,
            r.latency,
            r.raw_response,
            r.plan.goals};
  }

  friend bool operator==(const PlanEvent&, const PlanEvent&) = default;
};

inline json to_json_value(const PlanEvent& e) {
  json j = {{"type", "plan"},
            {"tick", e.tick},
            {"status", e.status},
            {"source", to_string(e.source)},
            {"outcome", to_string(e.outcome)},
            {"accepted", e.accepted},
            {"command_text", e.command_text},
            {"error_code", e.error_code},
            {"latency", e.latency},
            {"raw_response", e.raw_response},
            {"goals", to_json_value(e.goals)}};
  j["rejection_reason"] = e.rejection_reason ? json(*e.rejection_reason) : json(nullptr);
  return j;
}

inline PlanEvent plan_event_from_json(const json& j) {
  PlanEvent e;
  e.tick = j.at("tick").get<std::uint64_t>();
  e.status = j.at("status").get<std::string>();
  e.source = plan_source_from_string(j.at("source").get<std::string>());
  e.outcome = plan_outcome_from_string(j.at("outcome").get<std::string>());
  e.accepted = j.at("accepted").get<bool>();
  e.command_text = j.at("command_text").get<std::string>();
  if (!j.at("rejection_reason").is_null())
    e.rejection_reason = j.at("rejection_reason").get<std::string>();
  e.error_code = j.at("error_code").get<std::string>();
  e.latency = j.at("latency").get<double>();
  e.raw_response = j.at("raw_response").get<std::string>();
  e.goals = vec3_list_from_json(j.at("goals"));
  return e;
}

inline json to_json_value(const TickRecord& r) {
  json j = {{"type", "tick"},
            {"tick", r.tick},
            {"sim_time", r.sim_time},
            {"positions", to_json_value(r.positions)},
            {"commanded_velocities", to_json_value(r.commanded_velocities)},
            {"potential", r.potential},
            {"active_plan_source", to_string(r.active_plan_source)},
            {"escape_active", r.escape_active},
            {"stalled", r.stalled},
            {"at_goal", r.at_goal}};
  if (r.d_min) j["d_min"] = *r.d_min;
  return j;
}

inline TickRecord tick_record_from_json(const json& j) {
  TickRecord r;
  r.tick = j.at("tick").get<std::uint64_t>();
  r.sim_time = j.at("sim_time").get<double>();
  r.positions = vec3_list_from_json(j.at("positions"));
  r.commanded_velocities = vec3_list_from_json(j.at("commanded_velocities"));
  if (r.positions.size() != r.commanded_velocities.size())
    throw SchemaMismatch("positions and commanded_velocities differ in length");
  if (auto it = j.find("d_min"); it != j.end()) r.d_min = it->get<double>();
  r.potential = j.at("potential").get<double>();
  r.active_plan_source = plan_source_from_string(j.at("active_plan_source").get<std::string>());
  r.escape_active = j.at("escape_active").get<bool>();
  r.stalled = j.at("stalled").get<std::uint32_t>();
  r.at_goal = j.at("at_goal").get<bool>();
  return r;
}

/// Realtime pacing statistics.
struct TimingStats {
  std::uint64_t ticks = 0;
  std::uint64_t on_time = 0;  // dispatched within dt of their deadline
  double max_lateness = 0.0;  // seconds

  double on_time_fraction() const noexcept {
    return ticks ? static_cast<double>(on_time) / static_cast<double>(ticks) : 1.0;
  }

  friend bool operator==(const TimingStats&, const TimingStats&) = default;
};

inline json to_json_value(const TimingStats& t) {
  return {{"type", "timing"},
          {"ticks", t.ticks},
          {"on_time", t.on_time},
          {"max_lateness", t.max_lateness}};
}

inline TimingStats timing_from_json(const json& j) {
  return {j.at("ticks").get<std::uint64_t>(), j.at("on_time").get<std::uint64_t>(),
          j.at("max_lateness").get<double>()};
}

// ---------------------------------------------------------------------------

/// Everything a log file holds.
struct RunLog {
  RunHeader header;
  std::vector<PlanEvent> plans;
  std::vector<TickRecord> ticks;
  std::optional<TimingStats> timing;
};

class LogWriter {
public:
  explicit LogWriter(std::ostream& out) : out_(&out) {}

  void header(const RunHeader& h) { line(to_json_value(h)); }
  void plan(const PlanEvent& e) { line(to_json_value(e)); }
  void tick(const TickRecord& r) { line(to_json_value(r)); }
  void timing(const TimingStats& t) { line(to_json_value(t)); }

private:
  void line(const json& j) { *out_ << j.dump() << '\n'; }
  std::ostream* out_;
};

/// Reads a whole log. Any defect raises SchemaMismatch naming the 1-based
/// line number.
inline RunLog read_log(std::istream& in) {
  RunLog log;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  std::uint64_t next_tick = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto where = [&](const std::string& what) {
      return SchemaMismatch("line " + std::to_string(lineno) + ": " + what);
    };
    if (line.empty()) throw where("empty line");
    const json j = json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw where("not a JSON object");
    try {
      const std::string type = j.value("type", "");
      if (!have_header) {
        log.header = header_from_json(j);
        have_header = true;
      } else if (log.timing) {
        throw SchemaMismatch("content after the timing line");
      } else if (type == "tick") {
        auto r = tick_record_from_json(j);
        if (r.tick != next_tick) throw SchemaMismatch("tick " + std::to_string(r.tick) +
                                                      " out of order, expected " +
                                                      std::to_string(next_tick));
        if (r.positions.size() != log.header.n_agents)
          throw SchemaMismatch("tick row has wrong agent count");
        ++next_tick;
        log.ticks.push_back(std::move(r));
      } else if (type == "plan") {
        log.plans.push_back(plan_event_from_json(j));
      } else if (type == "timing") {
        log.timing = timing_from_json(j);
      } else {
        throw SchemaMismatch("unknown line type '" + type + "'");
      }
    } catch (const SchemaMismatch& e) {
      if (std::string_view(e.what()).starts_with("line ")) throw;
      throw where(e.what());
    } catch (const Error& e) {
      throw where(e.what());
    } catch (const json::exception& e) {
      throw where(e.what());
    }
  }
  if (!have_header) throw SchemaMismatch("line 1: log is empty");
  return log;
}

}  // namespace swarmfield
