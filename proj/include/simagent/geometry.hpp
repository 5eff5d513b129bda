#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>

#include "simagent/types.hpp"

namespace simagent::geometry {

struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double length = 1.0;
  double width = 1.0;
};

/// Corners in counter-clockwise order starting at front-left.
inline std::array<Vec2, 4> corners(const OrientedBox& b) {
  const Vec2 f{std::cos(b.heading), std::sin(b.heading)};
  const Vec2 l{-f.y, f.x};
  const Vec2 hf = f * (0.5 * b.length);
  const Vec2 hl = l * (0.5 * b.width);
  return {b.center + hf + hl, b.center - hf + hl, b.center - hf - hl, b.center + hf - hl};
}

inline bool contains(const OrientedBox& b, Vec2 p) {
  const Vec2 f{std::cos(b.heading), std::sin(b.heading)};
  const Vec2 d = p - b.center;
  return std::abs(dot(d, f)) <= 0.5 * b.length && std::abs(cross(f, d)) <= 0.5 * b.width;
}

namespace detail {

inline bool separated_along(Vec2 axis, const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b) {
  double amin = std::numeric_limits<double>::infinity(), amax = -amin;
  double bmin = amin, bmax = -amin;
  for (const Vec2& p : a) {
    const double s = dot(p, axis);
    amin = std::min(amin, s);
    amax = std::max(amax, s);
  }
  for (const Vec2& p : b) {
    const double s = dot(p, axis);
    bmin = std::min(bmin, s);
    bmax = std::max(bmax, s);
  }
  return amax < bmin || bmax < amin;
}

}  // namespace detail

/// Closed-box intersection by the separating-axis test; touching boxes overlap.
inline bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = corners(a);
  const auto cb = corners(b);
  const std::array<Vec2, 4> axes{Vec2{std::cos(a.heading), std::sin(a.heading)},
                                 Vec2{-std::sin(a.heading), std::cos(a.heading)},
                                 Vec2{std::cos(b.heading), std::sin(b.heading)},
                                 Vec2{-std::sin(b.heading), std::cos(b.heading)}};
  for (const Vec2& axis : axes) {
    if (detail::separated_along(axis, ca, cb)) return false;
  }
  return true;
}

struct SegmentProjection {
  Vec2 closest;
  double t = 0.0;  // in [0, 1]
  double distance = 0.0;
};

inline SegmentProjection project_onto_segment(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squared_norm();
  double t = len2 > 0.0 ? dot(p - a, ab) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const Vec2 c = a + ab * t;
  return {c, t, (p - c).norm()};
}

struct PolylineProjection {
  double arc_length = 0.0;
  double lateral = 0.0;   // signed offset from the chosen segment's line, + is left
  double distance = 0.0;  // unsigned distance to the closest point
  std::size_t segment = 0;
};

/// Projects onto the nearest segment; ties go to the lower segment index.
inline PolylineProjection project_onto_polyline(Vec2 p, std::span<const Vec2> polyline) {
  if (polyline.size() < 2) throw std::invalid_argument("project_onto_polyline: polyline needs >= 2 points");
  PolylineProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  double cumulative = 0.0;
  for (std::size_t s = 0; s + 1 < polyline.size(); ++s) {
    const Vec2 a = polyline[s], b = polyline[s + 1];
    const double len = (b - a).norm();
    const SegmentProjection proj = project_onto_segment(p, a, b);
    if (proj.distance < best.distance) {
      best.distance = proj.distance;
      best.arc_length = cumulative + proj.t * len;
      best.lateral = len > 0.0 ? cross((b - a) / len, p - a) : 0.0;
      best.segment = s;
    }
    cumulative += len;
  }
  return best;
}

inline double polyline_length(std::span<const Vec2> polyline) {
  double total = 0.0;
  for (std::size_t s = 0; s + 1 < polyline.size(); ++s) total += (polyline[s + 1] - polyline[s]).norm();
  return total;
}

/// Point at a given arc length, clamped to the polyline ends.
inline Vec2 point_at_arc_length(std::span<const Vec2> polyline, double s) {
  if (polyline.empty()) throw std::invalid_argument("point_at_arc_length: empty polyline");
  if (s <= 0.0 || polyline.size() == 1) return polyline.front();
  for (std::size_t k = 0; k + 1 < polyline.size(); ++k) {
    const double len = (polyline[k + 1] - polyline[k]).norm();
    if (s <= len && len > 0.0) return polyline[k] + (polyline[k + 1] - polyline[k]) * (s / len);
    s -= len;
  }
  return polyline.back();
}

/// Euclidean distance from the point to the nearest segment of any feature of the given type.
inline double min_distance_to_features(Vec2 p, std::span<const MapFeature> features, FeatureType type_filter) {
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const MapFeature& f : features) {
    if (f.type != type_filter) continue;
    found = true;
    for (std::size_t s = 0; s + 1 < f.polyline.size(); ++s) {
      best = std::min(best, project_onto_segment(p, f.polyline[s], f.polyline[s + 1]).distance);
    }
  }
  if (!found) {
    throw std::invalid_argument("min_distance_to_features: no features of type " + std::string(to_string(type_filter)));
  }
  return best;
}

/// Distance to the nearest road edge, negative when the point lies on the
/// non-drivable (right-hand) side of that edge.
inline double signed_distance_to_road_edge(Vec2 p, std::span<const MapFeature> features) {
  double best = std::numeric_limits<double>::infinity();
  double sign = 1.0;
  bool found = false;
  for (const MapFeature& f : features) {
    if (f.type != FeatureType::road_edge) continue;
    found = true;
    for (std::size_t s = 0; s + 1 < f.polyline.size(); ++s) {
      const Vec2 a = f.polyline[s], b = f.polyline[s + 1];
      const SegmentProjection proj = project_onto_segment(p, a, b);
      if (proj.distance < best) {
        best = proj.distance;
        sign = cross(b - a, p - a) < 0.0 ? -1.0 : 1.0;
      }
    }
  }
  if (!found) throw std::invalid_argument("signed_distance_to_road_edge: scenario has no road edges");
  return sign * best;
}

/// Smallest signed road-edge clearance over the box corners.
inline double box_road_clearance(const OrientedBox& box, std::span<const MapFeature> features) {
  double worst = std::numeric_limits<double>::infinity();
  for (const Vec2& c : corners(box)) worst = std::min(worst, signed_distance_to_road_edge(c, features));
  return worst;
}

}  // namespace simagent::geometry
