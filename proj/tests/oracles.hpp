#pragma once

// Independent brute-force references used only by tests.

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "simagent/geometry.hpp"
#include "simagent/types.hpp"

namespace simagent::oracle {

/// Signed distance from a point to a box (negative inside), from the box's local frame.
inline double box_sdf(const geometry::OrientedBox& b, Vec2 p) {
  const double c = std::cos(b.heading), s = std::sin(b.heading);
  const Vec2 d = p - b.center;
  const double lx = std::abs(c * d.x + s * d.y) - 0.5 * b.length;
  const double ly = std::abs(-s * d.x + c * d.y) - 0.5 * b.width;
  const double ox = std::max(lx, 0.0), oy = std::max(ly, 0.0);
  return std::hypot(ox, oy) + std::min(std::max(lx, ly), 0.0);
}

/// Points along the box boundary spaced at most `h` apart.
inline std::vector<Vec2> boundary_samples(const geometry::OrientedBox& b, double h) {
  const double c = std::cos(b.heading), s = std::sin(b.heading);
  const double hl = 0.5 * b.length, hw = 0.5 * b.width;
  const Vec2 local[4] = {{hl, hw}, {-hl, hw}, {-hl, -hw}, {hl, -hw}};
  std::vector<Vec2> out;
  for (int e = 0; e < 4; ++e) {
    const Vec2 a = local[e], z = local[(e + 1) % 4];
    const int n = static_cast<int>(std::ceil((z - a).norm() / h));
    for (int k = 0; k < n; ++k) {
      const Vec2 q = a + (z - a) * (static_cast<double>(k) / n);
      out.push_back(b.center + Vec2{c * q.x - s * q.y, s * q.x + c * q.y});
    }
  }
  return out;
}

struct OverlapVerdict {
  bool overlap = false;
  bool ambiguous = false;  // closest approach within one sampling step of touching
};

/// Two convex boxes intersect iff a boundary point of one lies in the other.
inline OverlapVerdict sampled_overlap(const geometry::OrientedBox& a, const geometry::OrientedBox& b, double h) {
  double best = std::numeric_limits<double>::infinity();
  for (const Vec2& p : boundary_samples(a, h)) best = std::min(best, box_sdf(b, p));
  for (const Vec2& p : boundary_samples(b, h)) best = std::min(best, box_sdf(a, p));
  return {best <= 0.0, std::abs(best) < h};
}

struct SampledProjection {
  double arc_length = 0.0;
  double distance = std::numeric_limits<double>::infinity();
};

/// Brute-force nearest point over `samples` points spread uniformly by arc length.
inline SampledProjection sampled_projection(Vec2 p, std::span<const Vec2> poly, int samples) {
  const double total = geometry::polyline_length(poly);
  SampledProjection best;
  for (int k = 0; k <= samples; ++k) {
    const double s = total * k / samples;
    const double d = (geometry::point_at_arc_length(poly, s) - p).norm();
    if (d < best.distance) best = {s, d};
  }
  return best;
}

inline double sampled_distance_to_polylines(Vec2 p, const std::vector<std::vector<Vec2>>& polys, int samples) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& poly : polys) best = std::min(best, sampled_projection(p, poly, samples).distance);
  return best;
}

}  // namespace simagent::oracle
