#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "swarmfield/vec3.hpp"

namespace swarmfield {

/// Uniform hash grid over agent positions with cells of edge `cell`.
/// Any pair closer than `cell` lands in the same or an adjacent cell.
class NeighborGrid {
public:
  NeighborGrid(std::span<const Vec3> positions, double cell)
      : positions_(positions), inv_cell_(1.0 / cell) {
    cells_.reserve(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i)
      cells_[key(cell_of(positions[i]))].push_back(static_cast<std::uint32_t>(i));
  }

  /// Indices of all agents in the 27 cells around agent i, i excluded,
  /// ascending.
  void candidates(std::size_t i, std::vector<std::uint32_t>& out) const {
    out.clear();
    const auto c = cell_of(positions_[i]);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
          if (it == cells_.end()) continue;
          for (auto j : it->second)
            if (j != i) out.push_back(j);
        }
    std::sort(out.begin(), out.end());
  }

private:
  using Cell = std::array<std::int64_t, 3>;

  Cell cell_of(const Vec3& p) const noexcept {
    return {static_cast<std::int64_t>(std::floor(p.x * inv_cell_)),
            static_cast<std::int64_t>(std::floor(p.y * inv_cell_)),
            static_cast<std::int64_t>(std::floor(p.z * inv_cell_))};
  }

  static std::uint64_t key(const Cell& c) noexcept {
    // 21 bits per axis is far beyond any fence at r_min-sized cells.
    constexpr std::uint64_t mask = (1ULL << 21) - 1;
    return (static_cast<std::uint64_t>(c[0]) & mask) |
           ((static_cast<std::uint64_t>(c[1]) & mask) << 21) |
           ((static_cast<std::uint64_t>(c[2]) & mask) << 42);
  }

  std::span<const Vec3> positions_;
  double inv_cell_;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells_;
};

/// Reference d_min: plain double loop over all unique pairs.
inline std::optional<double> min_pairwise_distance_brute(std::span<const Vec3> p) {
  if (p.size() < 2) return std::nullopt;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = i + 1; j < p.size(); ++j) best = std::min(best, distance(p[i], p[j]));
  return best;
}

/// d_min by sort-and-sweep along x; prunes pairs whose x gap already
/// exceeds the best distance. Returns the same double as the brute loop
/// since every surviving pair is evaluated with the same formula.
inline std::optional<double> min_pairwise_distance_sweep(std::span<const Vec3> p) {
  if (p.size() < 2) return std::nullopt;
  std::vector<std::uint32_t> order(p.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return p[a].x < p[b].x || (p[a].x == p[b].x && a < b);
  });
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < order.size(); ++a) {
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const Vec3& pa = p[order[a]];
      const Vec3& pb = p[order[b]];
      if (pb.x - pa.x > best) break;
      // distance(i, j) with i < j, matching the brute loop's argument order
      const auto i = std::min(order[a], order[b]);
      const auto j = std::max(order[a], order[b]);
      best = std::min(best, distance(p[i], p[j]));
    }
  }
  return best;
}

}  // namespace swarmfield
