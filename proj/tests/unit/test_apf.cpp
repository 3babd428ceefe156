#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "swarmfield/apf.hpp"

using namespace swarmfield;

namespace {

WaypointPlan plan_to(std::vector<Vec3> goals) {
  return {std::move(goals), PlanSource::oracle, "test", true, std::nullopt};
}

SwarmSnapshot step(const SwarmSnapshot& s, const VelocityCommandSet& c, double dt) {
  std::vector<AgentState> next;
  for (std::size_t i = 0; i < s.size(); ++i)
    next.push_back({s[i].id, s[i].position + c.velocities[i] * dt, c.velocities[i]});
  return {s.tick() + 1, (s.tick() + 1) * dt, std::move(next)};
}

std::vector<Vec3> random_points(std::mt19937_64& rng, std::size_t n, double half) {
  std::uniform_real_distribution<double> u(-half, half);
  std::vector<Vec3> p(n);
  for (auto& q : p) q = {u(rng), u(rng), 2.0 + u(rng)};
  return p;
}

}  // namespace

TEST(Apf, AttractionIsProportional) {
  EXPECT_EQ(attractive_velocity({1, 1, 1}, {2, 3, 1}, 1.5), (Vec3{1.5, 3.0, 0.0}));
}

TEST(Apf, RepulsionIsStrictAtRmin) {
  ControllerParams p;
  // 0.8 is exactly representable as the x gap here
  const Vec3 a{0.0, 0.0, 1.0}, b{0.8, 0.0, 1.0};
  ASSERT_EQ(distance(a, b), p.r_min);
  EXPECT_EQ(repulsive_velocity(a, b, p), Vec3{});
  const Vec3 c{0.5, 0.0, 1.0};
  const Vec3 v = repulsive_velocity(a, c, p);
  EXPECT_NEAR(v.x, -2.0 * 0.3, 1e-15);
  EXPECT_EQ(v.y, 0.0);
}

TEST(Apf, CoincidentAgentsArePushedApart) {
  ControllerParams p;
  const std::vector<Vec3> pos{{1, 1, 1}, {1, 1, 1}};
  const Vec3 v0 = pair_repulsion(pos, 0, 1, p), v1 = pair_repulsion(pos, 1, 0, p);
  EXPECT_NEAR(norm(v0), p.k_rep * p.r_min, 1e-12);
  EXPECT_EQ(v0, -v1);
}

TEST(Apf, SaturationCapsSpeedAndKeepsDirection) {
  const Vec3 v{3, 4, 0};
  const Vec3 s = saturate(v, 0.5);
  EXPECT_NEAR(norm(s), 0.5, 1e-15);
  EXPECT_NEAR(s.x / s.y, 0.75, 1e-15);
  EXPECT_EQ(saturate(Vec3{0.1, 0.2, 0.3}, 0.5), (Vec3{0.1, 0.2, 0.3}));
}

TEST(Apf, GridPathIsBitIdenticalToBrute) {
  std::mt19937_64 rng(5);
  ControllerParams params;
  params.escape_enabled = false;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + trial % 40;
    const auto pos = random_points(rng, n, 0.3 + 0.1 * (trial % 20));
    const auto snap = SwarmSnapshot::at_rest(0, 0.0, pos);
    const auto plan = plan_to(random_points(rng, n, 3.0));
    StallTracker stalls;
    const auto cmd = control_step(snap, plan, params, stalls);
    const NeighborGrid grid(pos, params.r_min);
    std::vector<std::uint32_t> scratch;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_EQ(repulsion_sum_grid(pos, i, grid, params, scratch),
                repulsion_sum_brute(pos, i, params));
      EXPECT_EQ(cmd.velocities[i], saturate(total_velocity(i, snap, plan, params), params.v_max));
    }
  }
}

// Hand computation: each agent sits at x = +-s/2 with the shared goal at the
// midpoint, so k_p s/2 = k_rep (r_min - s), s = 2 k_rep r_min / (k_p + 2 k_rep).
TEST(Apf, TwoAgentSharedGoalSettlesAtForceBalance) {
  const double expected = 2.0 * 2.0 * 0.8 / (1.0 + 2.0 * 2.0);
  ASSERT_NEAR(expected, 0.64, 1e-15);

  ControllerParams params;
  params.escape_enabled = false;  // the nudge would add a small tangential offset
  auto snap = SwarmSnapshot::at_rest(0, 0.0, std::vector<Vec3>{{-1, 0, 1}, {1, 0, 1}});
  const auto plan = plan_to({{0, 0, 1}, {0, 0, 1}});
  StallTracker stalls;
  for (int k = 0; k < 600; ++k) snap = step(snap, control_step(snap, plan, params, stalls), params.dt);
  EXPECT_NEAR(distance(snap[0].position, snap[1].position), expected, 1e-9);
  EXPECT_NEAR(snap[0].position.x + snap[1].position.x, 0.0, 1e-12);
}

// Unsaturated single agent: e_k = e_0 (1 - k_p dt)^k.
TEST(Apf, SingleAgentApproachesGeometrically) {
  ControllerParams params;
  auto snap = SwarmSnapshot::at_rest(0, 0.0, std::vector<Vec3>{{0.4, 0, 1}});
  const auto plan = plan_to({{0, 0, 1}});
  StallTracker stalls;
  for (int k = 1; k <= 100; ++k) {
    snap = step(snap, control_step(snap, plan, params, stalls), params.dt);
    EXPECT_NEAR(snap[0].position.x, 0.4 * std::pow(0.95, k), 1e-12);
  }
}

TEST(Apf, GradientMatchesFiniteDifference) {
  std::mt19937_64 rng(17);
  ControllerParams params;
  const double h = 1e-6;
  int checked = 0;
  while (checked < 300) {
    const std::size_t n = 2 + checked % 6;
    auto pos = random_points(rng, n, 0.6);
    bool near_kink = false;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = distance(pos[i], pos[j]);
        if (std::abs(d - params.r_min) < 1e-3 || d < 1e-3) near_kink = true;
      }
    if (near_kink) continue;
    const auto goals = random_points(rng, n, 2.0);
    const auto snap = SwarmSnapshot::at_rest(0, 0.0, pos);
    const auto plan = plan_to(goals);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 v = total_velocity(i, snap, plan, params);
      double g[3];
      for (int axis = 0; axis < 3; ++axis) {
        auto plus = pos, minus = pos;
        double* pp = axis == 0 ? &plus[i].x : axis == 1 ? &plus[i].y : &plus[i].z;
        double* pm = axis == 0 ? &minus[i].x : axis == 1 ? &minus[i].y : &minus[i].z;
        *pp += h;
        *pm -= h;
        g[axis] = (composite_potential(plus, goals, params) - composite_potential(minus, goals, params)) /
                  (2 * h);
      }
      EXPECT_NEAR(v.x, -g[0], 1e-5);
      EXPECT_NEAR(v.y, -g[1], 1e-5);
      EXPECT_NEAR(v.z, -g[2], 1e-5);
    }
    ++checked;
  }
}

TEST(Apf, PotentialNeverIncreasesWithoutEscape) {
  ControllerParams params;
  params.escape_enabled = false;
  std::mt19937_64 rng(23);
  for (int seed = 0; seed < 20; ++seed) {
    const std::size_t n = seed % 2 ? 5 : 10;
    auto snap = SwarmSnapshot::at_rest(0, 0.0, random_points(rng, n, 1.5));
    const auto plan = plan_to(random_points(rng, n, 1.5));
    StallTracker stalls;
    double v = composite_potential(snap, plan, params);
    for (int k = 0; k < 400; ++k) {
      snap = step(snap, control_step(snap, plan, params, stalls), params.dt);
      const double next = composite_potential(snap, plan, params);
      ASSERT_LE(next, v + 1e-6) << "seed " << seed << " tick " << k;
      v = next;
    }
  }
}

TEST(Apf, ConvergenceCheckUsesTolerance) {
  const std::vector<Vec3> p{{0, 0, 1}, {1, 0, 1}};
  const std::vector<Vec3> g{{0.04, 0, 1}, {1, 0.05, 1}};
  EXPECT_TRUE(convergence_check(p, g, 0.05));
  EXPECT_FALSE(convergence_check(p, g, 0.045));
}

TEST(Stall, CountsConsecutiveSlowTicksAwayFromGoal) {
  ControllerParams params;
  const auto snap = SwarmSnapshot::at_rest(0, 0.0, std::vector<Vec3>{{0, 0, 1}, {3, 0, 1}});
  const auto plan = plan_to({{1, 0, 1}, {3, 0, 1}});
  StallTracker t;
  for (int k = 0; k < params.escape_stall_ticks - 1; ++k) t.update(snap, plan, params);
  EXPECT_FALSE(t.stalled(0, params));
  t.update(snap, plan, params);
  EXPECT_TRUE(t.stalled(0, params));
  EXPECT_FALSE(t.stalled(1, params));  // at its goal
  EXPECT_EQ(t.stalled_count(params), 1u);

  std::vector<AgentState> moving{{0, {0, 0, 1}, {0.2, 0, 0}}, {1, {3, 0, 1}, {}}};
  t.update(SwarmSnapshot(1, 0.05, moving), plan, params);
  EXPECT_EQ(t.counts()[0], 0);
}

TEST(Escape, NudgeTurnsLeftOfTheAttraction) {
  EXPECT_EQ(escape_direction({1, 0, 0}, 0, EscapeSide::left), (Vec3{0, 1, 0}));
  EXPECT_EQ(escape_direction({1, 0, 0}, 1, EscapeSide::left), (Vec3{0, 1, 0}));
  EXPECT_EQ(escape_direction({1, 0, 0}, 1, EscapeSide::by_id_parity), (Vec3{0, -1, 0}));
  const Vec3 up = escape_direction({0, 0, 2}, 0, EscapeSide::left);
  EXPECT_NEAR(norm(up), 1.0, 1e-15);
  EXPECT_NEAR(dot(up, Vec3{0, 0, 1}), 0.0, 1e-15);
}

TEST(Escape, AppliedOnlyToStalledAgentsWhenEnabled) {
  ControllerParams params;
  // head-on pair balanced exactly: attraction cancels repulsion
  const double s = 0.64;
  const auto snap = SwarmSnapshot::at_rest(0, 0.0, std::vector<Vec3>{{-s / 2, 0, 1}, {s / 2, 0, 1}});
  const auto plan = plan_to({{0, 0, 1}, {0, 0, 1}});
  StallTracker stalls;
  VelocityCommandSet cmd;
  for (int k = 0; k < params.escape_stall_ticks; ++k) cmd = control_step(snap, plan, params, stalls);
  EXPECT_EQ(cmd.escape_applied, (std::vector<std::uint32_t>{0, 1}));
  EXPECT_NEAR(cmd.velocities[0].y, params.escape_speed, 1e-9);   // left of +x
  EXPECT_NEAR(cmd.velocities[1].y, -params.escape_speed, 1e-9);  // left of -x

  params.escape_enabled = false;
  StallTracker quiet;
  for (int k = 0; k < params.escape_stall_ticks; ++k) cmd = control_step(snap, plan, params, quiet);
  EXPECT_TRUE(cmd.escape_applied.empty());
  EXPECT_EQ(quiet.stalled_count(params), 2u);
}
