#pragma once

// Artificial-potential-field safety filter. Each tick every agent gets
//
//   v_total = k_p (g - p) + sum_j k_rep (r_min - d_ij) n_ij   [d_ij < r_min]
//   v_cmd   = v_total scaled down to |v_cmd| <= v_max
//
// which is minus the gradient of
//
//   V = sum_i k_p/2 |g_i - p_i|^2 + sum_{i<j, d_ij<r_min} k_rep/2 (r_min - d_ij)^2.

#include <cstdint>
#include <span>
#include <vector>

#include "swarmfield/model.hpp"
#include "swarmfield/neighbors.hpp"
#include "swarmfield/vec3.hpp"

namespace swarmfield {

struct VelocityCommandSet {
  std::uint64_t tick = 0;
  std::vector<Vec3> velocities;
  std::vector<std::uint32_t> escape_applied;  // ascending agent ids
};

inline Vec3 attractive_velocity(const Vec3& position, const Vec3& goal, double k_p) noexcept {
  return k_p * (goal - position);
}

/// Repulsion felt by agent i from neighbour j. Zero unless d_ij < r_min.
inline Vec3 repulsive_velocity(const Vec3& p_i, const Vec3& p_j, const ControllerParams& params,
                               const Vec3& coincident_fallback = {1.0, 0.0, 0.0}) noexcept {
  const double d = distance(p_i, p_j);
  if (!(d < params.r_min)) return {};
  return params.k_rep * (params.r_min - d) * unit_away(p_j, p_i, coincident_fallback);
}

inline Vec3 pair_repulsion(std::span<const Vec3> p, std::size_t i, std::size_t j,
                           const ControllerParams& params) noexcept {
  return repulsive_velocity(
      p[i], p[j], params,
      coincident_direction(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)));
}

/// Repulsion sum over every j != i, ascending j.
inline Vec3 repulsion_sum_brute(std::span<const Vec3> p, std::size_t i,
                                const ControllerParams& params) noexcept {
  Vec3 sum;
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (j == i || !(distance(p[i], p[j]) < params.r_min)) continue;
    sum += pair_repulsion(p, i, j, params);
  }
  return sum;
}

/// Same sum restricted to grid neighbours. Visits the in-range j in the
/// same ascending order as the brute loop, so results are bit-identical.
inline Vec3 repulsion_sum_grid(std::span<const Vec3> p, std::size_t i, const NeighborGrid& grid,
                               const ControllerParams& params,
                               std::vector<std::uint32_t>& scratch) {
  grid.candidates(i, scratch);
  Vec3 sum;
  for (auto j : scratch) {
    if (!(distance(p[i], p[j]) < params.r_min)) continue;
    sum += pair_repulsion(p, i, j, params);
  }
  return sum;
}

/// Unsaturated field velocity for one agent.
inline Vec3 total_velocity(std::size_t agent_index, const SwarmSnapshot& snapshot,
                           const WaypointPlan& plan, const ControllerParams& params) {
  const auto positions = snapshot.positions();
  return attractive_velocity(positions[agent_index], plan.goals[agent_index], params.k_p) +
         repulsion_sum_brute(positions, agent_index, params);
}

/// Scales v down to norm v_max when it is faster; otherwise returns v as is.
inline Vec3 saturate(const Vec3& v, double v_max) noexcept {
  const double n = norm(v);
  if (n <= v_max) return v;
  return v * (v_max / n);
}

inline double composite_potential(std::span<const Vec3> positions, std::span<const Vec3> goals,
                                  const ControllerParams& params) noexcept {
  double v = 0.0;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Vec3 e = goals[i] - positions[i];
    v += 0.5 * params.k_p * dot(e, e);
  }
  for (std::size_t i = 0; i < positions.size(); ++i)
    for (std::size_t j = i + 1; j < positions.size(); ++j) {
      const double d = distance(positions[i], positions[j]);
      if (d < params.r_min) {
        const double gap = params.r_min - d;
        v += 0.5 * params.k_rep * gap * gap;
      }
    }
  return v;
}

inline double composite_potential(const SwarmSnapshot& snapshot, const WaypointPlan& plan,
                                  const ControllerParams& params) {
  const auto positions = snapshot.positions();
  return composite_potential(positions, plan.goals, params);
}

/// True iff every agent is within `tolerance` of its goal.
inline bool convergence_check(std::span<const Vec3> positions, std::span<const Vec3> goals,
                              double tolerance) noexcept {
  for (std::size_t i = 0; i < positions.size(); ++i)
    if (distance(positions[i], goals[i]) > tolerance) return false;
  return true;
}

inline bool convergence_check(const SwarmSnapshot& snapshot, const WaypointPlan& plan,
                              double tolerance = 0.05) {
  const auto positions = snapshot.positions();
  return convergence_check(positions, plan.goals, tolerance);
}

/// Which way the escape nudge turns relative to the attraction heading.
enum class EscapeSide {
  left,          // every agent sidesteps to its own left
  by_id_parity,  // even ids left, odd ids right
};

/// Per-agent count of consecutive stalled ticks. A stalled agent is slower
/// than params.stall_speed while farther than params.goal_tolerance from
/// its goal. Owned by the control loop.
class StallTracker {
public:
  void reset(std::size_t n) { counts_.assign(n, 0); }

  void update(const SwarmSnapshot& snapshot, const WaypointPlan& plan,
              const ControllerParams& params) {
    if (counts_.size() != snapshot.size()) reset(snapshot.size());
    for (std::size_t i = 0; i < snapshot.size(); ++i) {
      const auto& a = snapshot[i];
      const bool stalled = norm(a.velocity) < params.stall_speed &&
                           distance(a.position, plan.goals[i]) > params.goal_tolerance;
      counts_[i] = stalled ? counts_[i] + 1 : 0;
    }
  }

  bool stalled(std::size_t i, const ControllerParams& params) const noexcept {
    return i < counts_.size() && counts_[i] >= params.escape_stall_ticks;
  }

  std::uint32_t stalled_count(const ControllerParams& params) const noexcept {
    std::uint32_t n = 0;
    for (std::size_t i = 0; i < counts_.size(); ++i) n += stalled(i, params) ? 1 : 0;
    return n;
  }

  const std::vector<int>& counts() const noexcept { return counts_; }

private:
  std::vector<int> counts_;
};

/// Unit vector perpendicular to `heading`, on the horizontal plane when
/// the heading has a horizontal component.
inline Vec3 escape_direction(const Vec3& heading, std::uint32_t id, EscapeSide side) noexcept {
  Vec3 perp{-heading.y, heading.x, 0.0};  // left turn about +Z
  if (norm(perp) < 1e-12) perp = Vec3{0.0, -heading.z, heading.y};  // vertical heading
  if (norm(perp) < 1e-12) perp = Vec3{0.0, 1.0, 0.0};
  perp = perp / norm(perp);
  if (side == EscapeSide::by_id_parity && (id % 2) == 1) perp = -perp;
  return perp;
}

/// One tick of the safety filter. Updates `stalls` from the snapshot, then
/// computes saturated commands for every agent.
inline VelocityCommandSet control_step(const SwarmSnapshot& snapshot, const WaypointPlan& plan,
                                       const ControllerParams& params, StallTracker& stalls,
                                       EscapeSide side = EscapeSide::left) {
  const auto positions = snapshot.positions();
  stalls.update(snapshot, plan, params);

  VelocityCommandSet out;
  out.tick = snapshot.tick();
  out.velocities.resize(positions.size());

  const NeighborGrid grid(positions, params.r_min);
  std::vector<std::uint32_t> scratch;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Vec3 att = attractive_velocity(positions[i], plan.goals[i], params.k_p);
    Vec3 v = att + repulsion_sum_grid(positions, i, grid, params, scratch);
    if (params.escape_enabled && stalls.stalled(i, params)) {
      v += params.escape_speed * escape_direction(att, static_cast<std::uint32_t>(i), side);
      out.escape_applied.push_back(static_cast<std::uint32_t>(i));
    }
    out.velocities[i] = saturate(v, params.v_max);
  }
  return out;
}

}  // namespace swarmfield
