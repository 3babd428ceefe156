#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "swarmfield/formation.hpp"

using namespace swarmfield;

namespace {

double brute_min(const std::vector<Vec3>& p) {
  double best = INFINITY;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < p.size(); ++j)
      if (i != j) best = std::min(best, norm(p[i] - p[j]));
  return best;
}

constexpr Shape kAllShapes[] = {Shape::circle, Shape::grid,   Shape::line, Shape::triangle,
                                Shape::cube,   Shape::sphere, Shape::tree};

}  // namespace

TEST(Formation, ShapeNamesRoundTrip) {
  for (auto s : kAllShapes) EXPECT_EQ(shape_from_string(to_string(s)), s);
  EXPECT_FALSE(shape_from_string("hexagon"));
}

TEST(Formation, CircleTenAtRadiusThree) {
  FormationSpec s;
  s.shape = Shape::circle;
  s.radius = 3.0;
  s.altitude = 2.0;
  const auto pts = formation_points(s, 10, GeoFence{});
  ASSERT_EQ(pts.size(), 10u);
  for (const auto& p : pts) {
    EXPECT_NEAR(std::hypot(p.x, p.y), 3.0, 1e-9);
    EXPECT_EQ(p.z, 2.0);
  }
  // equal spacing: every chord to the next point is 2 r sin(pi/10)
  for (std::size_t k = 0; k < pts.size(); ++k)
    EXPECT_NEAR(distance(pts[k], pts[(k + 1) % pts.size()]), 6.0 * std::sin(M_PI / 10), 1e-12);
}

TEST(Formation, GridFiveBySixIsExactLattice) {
  FormationSpec s;
  s.shape = Shape::grid;
  s.rows = 5;
  s.cols = 6;
  s.spacing = 1.0;
  s.altitude = 2.0;
  const auto pts = formation_points(s, 30, GeoFence{});
  std::set<std::tuple<double, double, double>> got;
  for (const auto& p : pts) got.insert({p.x, p.y, p.z});
  std::set<std::tuple<double, double, double>> want;
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c) want.insert({-2.5 + c, -2.0 + r, 2.0});
  EXPECT_EQ(got, want);
}

TEST(Formation, GridFactorizesWhenUnsized) {
  EXPECT_EQ(detail::grid_dims(FormationSpec{Shape::grid}, 12), (std::pair{3, 4}));
  EXPECT_EQ(detail::grid_dims(FormationSpec{Shape::grid}, 7), (std::pair{1, 7}));
  FormationSpec s{Shape::grid};
  s.rows = 4;
  EXPECT_THROW(formation_points(s, 10, GeoFence{}), ShapeInfeasible);
}

TEST(Formation, DefaultsKeepGoalsApartOrRefuse) {
  for (auto shape : kAllShapes)
    for (int n = 1; n <= 40; ++n) {
      FormationSpec s{shape};
      std::vector<Vec3> pts;
      try {
        pts = formation_points(s, n, GeoFence{});
      } catch (const ShapeInfeasible&) {
        continue;
      } catch (const FenceViolation&) {
        continue;
      }
      ASSERT_EQ(pts.size(), static_cast<std::size_t>(n));
      if (n > 1) {
        EXPECT_GE(brute_min(pts), 0.8) << to_string(shape) << " n=" << n;
      }
    }
}

TEST(Formation, CubeStartsWithTheEightCorners) {
  FormationSpec s{Shape::cube};
  const auto pts = formation_points(s, 8, GeoFence{});
  for (const auto& p : pts) {
    EXPECT_EQ(std::abs(p.x), 1.0);
    EXPECT_EQ(std::abs(p.y), 1.0);
    EXPECT_EQ(std::abs(p.z - 2.0), 1.0);
  }
  EXPECT_DOUBLE_EQ(brute_min(pts), 2.0);
}

TEST(Formation, SphereOnTheSurface) {
  FormationSpec s{Shape::sphere};
  s.radius = 2.0;
  for (const auto& p : formation_points(s, 30, GeoFence{}))
    EXPECT_NEAR(distance(p, Vec3{0, 0, 2.5}), 2.0, 1e-12);
}

TEST(Formation, TreeEndsAtTheApex) {
  FormationSpec s{Shape::tree};
  const auto pts = formation_points(s, 10, GeoFence{});
  EXPECT_EQ(pts.back(), (Vec3{0, 0, 4.0}));
  for (const auto& p : pts) EXPECT_LE(p.z, 4.0);
}

TEST(Formation, InfeasibleAndOutOfFence) {
  FormationSpec tight{Shape::circle};
  tight.radius = 0.5;
  EXPECT_THROW(formation_points(tight, 10, GeoFence{}), ShapeInfeasible);
  FormationSpec big{Shape::circle};
  big.radius = 12.0;
  EXPECT_THROW(formation_points(big, 10, GeoFence{}), FenceViolation);
  FormationSpec low{Shape::grid};
  low.altitude = 0.1;
  EXPECT_THROW(formation_points(low, 4, GeoFence{}), FenceViolation);
  FormationSpec bad{Shape::sphere};
  bad.radius = -1.0;
  EXPECT_THROW(formation_points(bad, 4, GeoFence{}), ShapeInfeasible);
  EXPECT_THROW(formation_points(FormationSpec{}, 0, GeoFence{}), ShapeInfeasible);
}

TEST(Formation, AssignmentIsAPermutationAndGreedyOptimalForPairs) {
  const std::vector<Vec3> pts{{0, 0, 1}, {5, 0, 1}, {0, 5, 1}};
  const std::vector<Vec3> agents{{4.5, 0, 1}, {0, 4, 1}, {0.2, 0, 1}};
  const auto goals = assign_nearest(pts, agents);
  EXPECT_EQ(goals, (std::vector<Vec3>{{5, 0, 1}, {0, 5, 1}, {0, 0, 1}}));
}

TEST(Formation, PlanIsOracleAndUsesEveryPoint) {
  FormationSpec s{Shape::circle};
  s.radius = 3.0;
  std::vector<Vec3> spawn;
  for (int i = 0; i < 10; ++i) spawn.push_back({-6.0 + 1.2 * i, 0.0, 1.0});
  const auto snap = SwarmSnapshot::at_rest(0, 0.0, spawn);
  const auto plan = plan_formation(s, snap, GeoFence{});
  EXPECT_EQ(plan.source, PlanSource::oracle);
  auto want = formation_points(s, 10, GeoFence{});
  auto got = plan.goals;
  auto key = [](const Vec3& a, const Vec3& b) { return std::tie(a.x, a.y, a.z) < std::tie(b.x, b.y, b.z); };
  std::sort(want.begin(), want.end(), key);
  std::sort(got.begin(), got.end(), key);
  EXPECT_EQ(got, want);
}

TEST(Swap, AntipodalRingPairsOpposites) {
  std::vector<Vec3> ring;
  for (int i = 0; i < 10; ++i) {
    const double a = 2 * M_PI * i / 10;
    ring.push_back({3 * std::cos(a), 3 * std::sin(a), 2.0});
  }
  const auto snap = SwarmSnapshot::at_rest(0, 0.0, ring);
  const auto pairing = swap_partners(snap);
  EXPECT_FALSE(pairing.id_fallback);
  for (std::uint32_t i = 0; i < 10; ++i) EXPECT_EQ(pairing.partner[i], (i + 5) % 10);
  const auto plan = swap_targets(snap);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(plan.goals[i], ring[(i + 5) % 10]);
}

TEST(Swap, OddSwarmHasNoMatching) {
  const std::vector<Vec3> tri{{0, 0, 1}, {2, 0, 1}, {1, 2, 1}};
  EXPECT_THROW(swap_partners(SwarmSnapshot::at_rest(0, 0.0, tri)), NoValidMatching);
  EXPECT_THROW(swap_partners(SwarmSnapshot::at_rest(0, 0.0, std::vector<Vec3>{{0, 0, 1}})),
               NoValidMatching);
}

TEST(Swap, EvenSwarmFallsBackToIdHalves) {
  // a line has no point symmetry matching, centroid reflection collides
  const std::vector<Vec3> line{{0, 0, 1}, {1, 0, 1}, {2, 0, 1}, {7, 0, 1}};
  const auto pairing = swap_partners(SwarmSnapshot::at_rest(0, 0.0, line));
  EXPECT_TRUE(pairing.id_fallback);
  EXPECT_EQ(pairing.partner, (std::vector<std::uint32_t>{2, 3, 0, 1}));
}
