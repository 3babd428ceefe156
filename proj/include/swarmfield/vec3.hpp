#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace swarmfield {

/// Point or displacement in meters. X = forward, Y = left, Z = up.
struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3& operator+=(const Vec3& o) noexcept {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) noexcept {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(double s) noexcept {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }

  friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) noexcept { return a += b; }
  friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) noexcept { return a -= b; }
  friend constexpr Vec3 operator-(const Vec3& a) noexcept { return {-a.x, -a.y, -a.z}; }
  friend constexpr Vec3 operator*(Vec3 a, double s) noexcept { return a *= s; }
  friend constexpr Vec3 operator*(double s, Vec3 a) noexcept { return a *= s; }
  friend constexpr Vec3 operator/(const Vec3& a, double s) noexcept {
    return {a.x / s, a.y / s, a.z / s};
  }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) noexcept {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

constexpr Vec3 cross(const Vec3& a, const Vec3& b) noexcept {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) noexcept { return std::sqrt(dot(v, v)); }

inline bool is_finite(const Vec3& v) noexcept {
  return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z);
}

/// Euclidean distance |a - b|.
inline double distance(const Vec3& a, const Vec3& b) noexcept { return norm(a - b); }

/// Below this separation two agents count as coincident and the pair
/// direction comes from the fallback instead of normalization.
inline constexpr double kCoincidentEpsilon = 1e-9;

/// Unit vector pointing from `from_j` to `at_i`; `fallback` when the two
/// points coincide.
inline Vec3 unit_away(const Vec3& from_j, const Vec3& at_i, const Vec3& fallback) noexcept {
  const Vec3 d = at_i - from_j;
  const double n = norm(d);
  if (n < kCoincidentEpsilon) return fallback;
  return d / n;
}

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Horizontal unit vector for a coincident pair (i, j). The unordered pair
/// hashes to an azimuth; the lower id gets that direction and the higher id
/// its negation, so the two agents are pushed apart.
inline Vec3 coincident_direction(std::uint32_t i, std::uint32_t j) noexcept {
  const std::uint32_t lo = i < j ? i : j;
  const std::uint32_t hi = i < j ? j : i;
  const std::uint64_t h =
      detail::splitmix64((static_cast<std::uint64_t>(lo) << 32) | hi);
  const double azimuth =
      static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 * std::numbers::pi;
  const Vec3 dir{std::cos(azimuth), std::sin(azimuth), 0.0};
  return i < j ? dir : -dir;
}

}  // namespace swarmfield
