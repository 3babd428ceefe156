#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "swarmfield/error.hpp"
#include "swarmfield/model.hpp"
#include "swarmfield/neighbors.hpp"

namespace swarmfield {

enum class Shape { circle, grid, line, triangle, cube, sphere, tree };

inline std::string_view to_string(Shape s) noexcept {
  switch (s) {
    case Shape::circle: return "circle";
    case Shape::grid: return "grid";
    case Shape::line: return "line";
    case Shape::triangle: return "triangle";
    case Shape::cube: return "cube";
    case Shape::sphere: return "sphere";
    case Shape::tree: return "tree";
  }
  return "circle";
}

inline std::optional<Shape> shape_from_string(std::string_view s) {
  for (Shape sh : {Shape::circle, Shape::grid, Shape::line, Shape::triangle, Shape::cube,
                   Shape::sphere, Shape::tree})
    if (to_string(sh) == s) return sh;
  return std::nullopt;
}

/// Geometric formation request. Unset sizes fall back to per-shape
/// defaults; `altitude` overrides center.z.
struct FormationSpec {
  Shape shape = Shape::circle;
  std::optional<Vec3> center;
  std::optional<double> altitude;
  std::optional<double> radius;       // circle, sphere
  std::optional<int> rows, cols;      // grid
  std::optional<double> spacing;      // grid, line
  std::optional<double> edge;         // triangle, cube
  std::optional<double> height;       // tree
  std::optional<double> base_radius;  // tree

  Vec3 resolved_center() const {
    Vec3 c = center.value_or(Vec3{0.0, 0.0, default_altitude(shape)});
    if (altitude) c.z = *altitude;
    return c;
  }

  static double default_altitude(Shape s) noexcept {
    switch (s) {
      case Shape::sphere: return 2.5;
      case Shape::tree: return 1.0;
      default: return 2.0;
    }
  }

  friend bool operator==(const FormationSpec&, const FormationSpec&) = default;
};

namespace detail {

inline double positive(std::optional<double> v, double fallback, const char* name) {
  const double x = v.value_or(fallback);
  if (!(x > 0.0) || !std::isfinite(x))
    throw ShapeInfeasible(std::string(name) + " must be finite and > 0");
  return x;
}

inline std::vector<Vec3> circle_points(Vec3 c, double r, int n) {
  std::vector<Vec3> out;
  for (int k = 0; k < n; ++k) {
    const double a = 2.0 * std::numbers::pi * k / n;
    out.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a), c.z});
  }
  return out;
}

inline std::pair<int, int> grid_dims(const FormationSpec& spec, int n) {
  if (spec.rows && spec.cols) return {*spec.rows, *spec.cols};
  if (spec.rows) return {*spec.rows, *spec.rows > 0 ? n / *spec.rows : 0};
  if (spec.cols) return {*spec.cols > 0 ? n / *spec.cols : 0, *spec.cols};
  // most square factorization, rows <= cols
  int rows = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
  while (rows > 1 && n % rows != 0) --rows;
  return {rows, n / rows};
}

inline std::vector<Vec3> cube_points(Vec3 c, double edge, int n) {
  const double h = edge / 2.0;
  std::vector<Vec3> corners;
  for (int k = 0; k < 8; ++k)
    corners.push_back({c.x + ((k & 1) ? h : -h), c.y + ((k & 2) ? h : -h),
                       c.z + ((k & 4) ? h : -h)});
  std::vector<Vec3> out(corners.begin(), corners.begin() + std::min(n, 8));
  // Edges join corners differing in exactly one bit, ordered by (a, b).
  std::vector<std::pair<int, int>> edges;
  for (int a = 0; a < 8; ++a)
    for (int b = a + 1; b < 8; ++b)
      if (std::has_single_bit(static_cast<unsigned>(a ^ b))) edges.emplace_back(a, b);
  // Level s adds the points at fractions j/s not present at coarser levels.
  for (int s = 2; static_cast<int>(out.size()) < n; ++s)
    for (const auto& [a, b] : edges)
      for (int j = 1; j < s && static_cast<int>(out.size()) < n; ++j)
        if (std::gcd(j, s) == 1)
          out.push_back(corners[a] + (corners[b] - corners[a]) * (static_cast<double>(j) / s));
  return out;
}

inline std::vector<Vec3> sphere_points(Vec3 c, double r, int n) {
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  std::vector<Vec3> out;
  for (int k = 0; k < n; ++k) {
    const double z = 1.0 - (2.0 * k + 1.0) / n;
    const double ring = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * k;
    Vec3 u{ring * std::cos(phi), ring * std::sin(phi), z};
    u = u / norm(u);
    out.push_back(c + r * u);
  }
  return out;
}

inline std::vector<Vec3> triangle_points(Vec3 c, double edge, int n) {
  const double circum = edge / std::sqrt(3.0);
  std::array<Vec3, 3> v;
  for (int k = 0; k < 3; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 3.0;
    v[k] = {c.x + circum * std::cos(a), c.y + circum * std::sin(a), c.z};
  }
  // n points at equal arc length along the perimeter, starting at vertex 0
  std::vector<Vec3> out;
  for (int k = 0; k < n; ++k) {
    const double s = 3.0 * k / n;
    const int side = std::min(2, static_cast<int>(std::floor(s)));
    const double f = s - side;
    out.push_back(v[side] + (v[(side + 1) % 3] - v[side]) * f);
  }
  return out;
}

// Stacked rings of linearly shrinking radius under a single apex.
inline std::vector<Vec3> tree_points(Vec3 base, double height, double base_radius, int n) {
  std::vector<Vec3> out;
  const int ring_points = n - 1;
  if (ring_points > 0) {
    const int layers = (n + 5) / 6;
    std::vector<double> radius(layers);
    double total = 0.0;
    for (int k = 0; k < layers; ++k) {
      radius[k] = base_radius * (layers - k) / layers;
      total += radius[k];
    }
    // largest-remainder split of the ring points, proportional to radius
    std::vector<int> count(layers);
    std::vector<std::pair<double, int>> rem;
    int assigned = 0;
    for (int k = 0; k < layers; ++k) {
      const double share = ring_points * radius[k] / total;
      count[k] = static_cast<int>(std::floor(share));
      assigned += count[k];
      rem.emplace_back(share - count[k], k);
    }
    std::stable_sort(rem.begin(), rem.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int i = 0; assigned < ring_points; ++i, ++assigned) ++count[rem[i].second];
    for (int k = 0; k < layers; ++k) {
      const Vec3 c{base.x, base.y, base.z + height * k / layers};
      // stagger successive rings by half a step
      const double phase = (k % 2) ? std::numbers::pi / std::max(count[k], 1) : 0.0;
      for (int m = 0; m < count[k]; ++m) {
        const double a = phase + 2.0 * std::numbers::pi * m / count[k];
        out.push_back({c.x + radius[k] * std::cos(a), c.y + radius[k] * std::sin(a), c.z});
      }
    }
  }
  out.push_back({base.x, base.y, base.z + height});
  return out;
}

}  // namespace detail

/// Goal points for a formation in canonical order (not yet assigned to
/// agents). Throws ShapeInfeasible when the geometry cannot hold n agents
/// r_min apart, FenceViolation when a point leaves the fence.
inline std::vector<Vec3> formation_points(const FormationSpec& spec, int n, const GeoFence& fence,
                                          double r_min = 0.8) {
  if (n < 1) throw ShapeInfeasible("formation needs at least one agent");
  const Vec3 c = spec.resolved_center();
  if (!is_finite(c)) throw NonFinite("formation center is not finite");

  std::vector<Vec3> pts;
  switch (spec.shape) {
    case Shape::circle:
      pts = detail::circle_points(c, detail::positive(spec.radius, 2.0, "radius"), n);
      break;
    case Shape::grid: {
      const double spacing = detail::positive(spec.spacing, 1.0, "spacing");
      const auto [rows, cols] = detail::grid_dims(spec, n);
      if (rows < 1 || cols < 1 || rows * cols != n)
        throw ShapeInfeasible("grid " + std::to_string(rows) + "x" + std::to_string(cols) +
                              " does not hold " + std::to_string(n) + " agents");
      for (int r = 0; r < rows; ++r)
        for (int k = 0; k < cols; ++k)
          pts.push_back({c.x + (k - (cols - 1) / 2.0) * spacing,
                         c.y + (r - (rows - 1) / 2.0) * spacing, c.z});
      break;
    }
    case Shape::line: {
      const double spacing = detail::positive(spec.spacing, 1.0, "spacing");
      for (int k = 0; k < n; ++k) pts.push_back({c.x, c.y + (k - (n - 1) / 2.0) * spacing, c.z});
      break;
    }
    case Shape::triangle:
      pts = detail::triangle_points(c, detail::positive(spec.edge, 2.0, "edge"), n);
      break;
    case Shape::cube:
      pts = detail::cube_points(c, detail::positive(spec.edge, 2.0, "edge"), n);
      break;
    case Shape::sphere:
      pts = detail::sphere_points(c, detail::positive(spec.radius, 2.0, "radius"), n);
      break;
    case Shape::tree:
      pts = detail::tree_points(c, detail::positive(spec.height, 3.0, "height"),
                                detail::positive(spec.base_radius, 2.0, "base_radius"), n);
      break;
  }

  if (auto d = min_pairwise_distance_brute(pts); d && *d < r_min)
    throw ShapeInfeasible(std::string(to_string(spec.shape)) + " for " + std::to_string(n) +
                          " agents puts two goals " + std::to_string(*d) + " m apart");
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (auto v = fence.violation(pts[i]); !v.empty())
      throw FenceViolation("formation point " + std::to_string(i) + " outside fence (" + v + ")");
  return pts;
}

/// Greedy nearest-available matching: repeatedly bind the globally closest
/// free (agent, point) pair. Returns goals indexed by agent id.
inline std::vector<Vec3> assign_nearest(std::span<const Vec3> points,
                                        std::span<const Vec3> positions) {
  const std::size_t n = positions.size();
  std::vector<std::tuple<double, std::uint32_t, std::uint32_t>> pairs;
  pairs.reserve(n * points.size());
  for (std::uint32_t a = 0; a < n; ++a)
    for (std::uint32_t p = 0; p < points.size(); ++p)
      pairs.emplace_back(distance(positions[a], points[p]), a, p);
  std::sort(pairs.begin(), pairs.end());
  std::vector<Vec3> goals(n);
  std::vector<bool> agent_done(n, false), point_done(points.size(), false);
  std::size_t bound = 0;
  for (const auto& [d, a, p] : pairs) {
    if (agent_done[a] || point_done[p]) continue;
    goals[a] = points[p];
    agent_done[a] = point_done[p] = true;
    if (++bound == n) break;
  }
  return goals;
}

/// Formation plan with goals already assigned to the agents of `snapshot`.
inline WaypointPlan plan_formation(const FormationSpec& spec, const SwarmSnapshot& snapshot,
                                   const GeoFence& fence, double r_min = 0.8) {
  const auto pts = formation_points(spec, static_cast<int>(snapshot.size()), fence, r_min);
  const auto positions = snapshot.positions();
  WaypointPlan plan;
  plan.goals = assign_nearest(pts, positions);
  plan.source = PlanSource::oracle;
  plan.command_text = "formation " + std::string(to_string(spec.shape));
  plan.accepted = true;
  return plan;
}

struct SwapPairing {
  std::vector<std::uint32_t> partner;  // agent i moves to partner[i]'s position
  bool id_fallback = false;
};

/// Pairs every agent with the one nearest to its point reflection through
/// the swarm centroid. If that map is not a fixed-point-free involution,
/// falls back to
/// i <-> (i + N/2) mod N for even N and throws NoValidMatching for odd N.
inline SwapPairing swap_partners(const SwarmSnapshot& snapshot) {
  const auto p = snapshot.positions();
  const std::size_t n = p.size();
  Vec3 centroid;
  for (const auto& q : p) centroid += q;
  centroid = centroid / static_cast<double>(n);

  SwapPairing out;
  out.partner.resize(n);
  std::vector<int> hits(n, 0);
  bool ok = true;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 mirror = 2.0 * centroid - p[i];
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
      if (distance(p[j], mirror) < distance(p[best], mirror)) best = j;
    out.partner[i] = static_cast<std::uint32_t>(best);
    if (best == i || ++hits[best] > 1) ok = false;
  }
  // a swap is a pairing: partners must point back at each other
  for (std::size_t i = 0; ok && i < n; ++i)
    if (out.partner[out.partner[i]] != i) ok = false;
  if (ok) return out;

  if (n % 2 != 0)
    throw NoValidMatching("no opposite-agent matching for " + std::to_string(n) +
                          " agents (odd swarm size)");
  for (std::size_t i = 0; i < n; ++i) out.partner[i] = static_cast<std::uint32_t>((i + n / 2) % n);
  out.id_fallback = true;
  return out;
}

inline WaypointPlan swap_targets(const SwarmSnapshot& snapshot) {
  const auto pairing = swap_partners(snapshot);
  WaypointPlan plan;
  plan.source = PlanSource::oracle;
  plan.accepted = true;
  plan.command_text = pairing.id_fallback ? "swap (id fallback)" : "swap";
  for (auto j : pairing.partner) plan.goals.push_back(snapshot[j].position);
  return plan;
}

}  // namespace swarmfield
