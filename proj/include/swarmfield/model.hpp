#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "swarmfield/error.hpp"
#include "swarmfield/vec3.hpp"

namespace swarmfield {

struct AgentState {
  std::uint32_t id = 0;
  Vec3 position;
  Vec3 velocity;  // last commanded, m/s

  friend bool operator==(const AgentState&, const AgentState&) = default;
};

/// Noiseless state of the whole swarm at one tick. Built once and never
/// mutated; the control loop publishes it behind a shared_ptr<const>.
class SwarmSnapshot {
public:
  SwarmSnapshot() = default;

  SwarmSnapshot(std::uint64_t tick, double sim_time, std::vector<AgentState> agents)
      : tick_(tick), sim_time_(sim_time), agents_(std::move(agents)) {
    if (agents_.empty()) throw InvalidConfig("snapshot needs at least one agent");
    for (std::size_t i = 0; i < agents_.size(); ++i) {
      if (agents_[i].id != i)
        throw InvalidConfig("agent ids must be 0..N-1 in order");
      if (!is_finite(agents_[i].position) || !is_finite(agents_[i].velocity))
        throw NonFinite("agent " + std::to_string(i) + " has a non-finite state");
    }
  }

  /// Snapshot at rest from bare positions.
  static SwarmSnapshot at_rest(std::uint64_t tick, double sim_time,
                               std::span<const Vec3> positions) {
    std::vector<AgentState> agents;
    agents.reserve(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i)
      agents.push_back({static_cast<std::uint32_t>(i), positions[i], {}});
    return {tick, sim_time, std::move(agents)};
  }

  std::uint64_t tick() const noexcept { return tick_; }
  double sim_time() const noexcept { return sim_time_; }
  std::size_t size() const noexcept { return agents_.size(); }
  const std::vector<AgentState>& agents() const noexcept { return agents_; }
  const AgentState& operator[](std::size_t i) const { return agents_[i]; }

  std::vector<Vec3> positions() const {
    std::vector<Vec3> out;
    out.reserve(agents_.size());
    for (const auto& a : agents_) out.push_back(a.position);
    return out;
  }

  friend bool operator==(const SwarmSnapshot&, const SwarmSnapshot&) = default;

private:
  std::uint64_t tick_ = 0;
  double sim_time_ = 0.0;
  std::vector<AgentState> agents_;
};

/// Constants of the safety filter.
struct ControllerParams {
  double k_p = 1.0;             // 1/s
  double k_rep = 2.0;           // 1/s
  double r_min = 0.8;           // m, repulsion activation radius
  double v_max = 0.5;           // m/s
  double dt = 0.05;             // s (20 Hz)
  double r_drone = 0.055;       // m
  double collision_dist = 0.11; // m, center-to-center contact
  bool escape_enabled = true;
  double escape_speed = 1e-3;   // m/s
  int escape_stall_ticks = 20;
  double stall_speed = 0.01;    // m/s
  double goal_tolerance = 0.05; // m

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v))
        throw InvalidConfig(std::string(name) + " must be finite and > 0");
    };
    positive(k_p, "k_p");
    positive(k_rep, "k_rep");
    positive(r_min, "r_min");
    positive(v_max, "v_max");
    positive(dt, "dt");
    positive(r_drone, "r_drone");
    positive(collision_dist, "collision_dist");
    positive(escape_speed, "escape_speed");
    positive(stall_speed, "stall_speed");
    positive(goal_tolerance, "goal_tolerance");
    if (!(collision_dist < r_min)) throw InvalidConfig("collision_dist must be < r_min");
    if (escape_stall_ticks < 1) throw InvalidConfig("escape_stall_ticks must be >= 1");
  }

  double tick_rate() const noexcept { return 1.0 / dt; }

  friend bool operator==(const ControllerParams&, const ControllerParams&) = default;
};

/// Axis-aligned operational volume. Bounds are inclusive.
struct GeoFence {
  double x_min = -10.0, x_max = 10.0;
  double y_min = -10.0, y_max = 10.0;
  double z_min = 0.2, z_max = 5.0;
  double prompt_z_floor = 0.5;  // floor quoted to the language model

  void validate() const {
    if (!(x_min < x_max) || !(y_min < y_max) || !(z_min < z_max))
      throw InvalidConfig("fence needs min < max on every axis");
    if (!(z_min > 0.0) || !(z_min <= prompt_z_floor))
      throw InvalidConfig("fence needs 0 < z_min <= prompt_z_floor");
  }

  bool contains(const Vec3& p) const noexcept {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max &&
           p.z >= z_min && p.z <= z_max;
  }

  /// Name of the first violated bound ("x<min", "z>max", ...), empty if inside.
  std::string violation(const Vec3& p) const {
    if (!is_finite(p)) return "non-finite";
    if (p.x < x_min) return "x<min";
    if (p.x > x_max) return "x>max";
    if (p.y < y_min) return "y<min";
    if (p.y > y_max) return "y>max";
    if (p.z < z_min) return "z<min";
    if (p.z > z_max) return "z>max";
    return {};
  }

  friend bool operator==(const GeoFence&, const GeoFence&) = default;
};

enum class PlanSource { oracle, llm, hold };

inline std::string_view to_string(PlanSource s) noexcept {
  switch (s) {
    case PlanSource::oracle: return "oracle";
    case PlanSource::llm: return "llm";
    case PlanSource::hold: return "hold";
  }
  return "hold";
}

inline PlanSource plan_source_from_string(std::string_view s) {
  if (s == "oracle") return PlanSource::oracle;
  if (s == "llm") return PlanSource::llm;
  if (s == "hold") return PlanSource::hold;
  throw SchemaMismatch("unknown plan source '" + std::string(s) + "'");
}

/// Goal matrix for the whole swarm plus where it came from.
struct WaypointPlan {
  std::vector<Vec3> goals;
  PlanSource source = PlanSource::hold;
  std::string command_text;
  bool accepted = false;
  std::optional<std::string> rejection_reason;

  /// Goals pinned to the given positions.
  static WaypointPlan hold(const SwarmSnapshot& snap, std::string command_text = {},
                           std::optional<std::string> reason = std::nullopt) {
    return {snap.positions(), PlanSource::hold, std::move(command_text), true,
            std::move(reason)};
  }

  friend bool operator==(const WaypointPlan&, const WaypointPlan&) = default;
};

/// One row of the per-tick log.
struct TickRecord {
  std::uint64_t tick = 0;
  double sim_time = 0.0;
  std::vector<Vec3> positions;
  std::vector<Vec3> commanded_velocities;
  std::optional<double> d_min;  // absent when N = 1
  double potential = 0.0;
  PlanSource active_plan_source = PlanSource::hold;
  bool escape_active = false;
  std::uint32_t stalled = 0;    // agents past the stall threshold this tick
  bool at_goal = false;         // every agent within goal tolerance

  friend bool operator==(const TickRecord&, const TickRecord&) = default;
};

}  // namespace swarmfield
