#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "simagent/geometry.hpp"

namespace simagent::geometry {

/// Uniform-grid bucketing of road-edge segments by bounding box. Queries return exactly what
/// signed_distance_to_road_edge / box_road_clearance return, including tie-breaking.
class RoadEdgeIndex {
public:
  explicit RoadEdgeIndex(std::span<const MapFeature> features, double cell = 4.0) : cell_(cell) {
    for (const MapFeature& f : features) {
      if (f.type != FeatureType::road_edge) continue;
      for (std::size_t s = 0; s + 1 < f.polyline.size(); ++s) segs_.push_back({f.polyline[s], f.polyline[s + 1]});
    }
    if (segs_.empty()) return;
    lo_ = {std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    Vec2 hi{-lo_.x, -lo_.y};
    for (const Segment& s : segs_) {
      lo_ = {std::min({lo_.x, s.a.x, s.b.x}), std::min({lo_.y, s.a.y, s.b.y})};
      hi = {std::max({hi.x, s.a.x, s.b.x}), std::max({hi.y, s.a.y, s.b.y})};
    }
    nx_ = static_cast<int>(std::floor((hi.x - lo_.x) / cell_)) + 1;
    ny_ = static_cast<int>(std::floor((hi.y - lo_.y) / cell_)) + 1;
    cells_.resize(static_cast<std::size_t>(nx_) * ny_);
    for (std::size_t k = 0; k < segs_.size(); ++k) {
      const Segment& s = segs_[k];
      const int x0 = cx(std::min(s.a.x, s.b.x)), x1 = cx(std::max(s.a.x, s.b.x));
      const int y0 = cy(std::min(s.a.y, s.b.y)), y1 = cy(std::max(s.a.y, s.b.y));
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) cells_[static_cast<std::size_t>(y) * nx_ + x].push_back(k);
      }
    }
  }

  bool empty() const { return segs_.empty(); }

  double signed_distance(Vec2 p) const {
    if (segs_.empty()) throw std::invalid_argument("RoadEdgeIndex: scenario has no road edges");
    const int px = static_cast<int>(std::floor((p.x - lo_.x) / cell_));
    const int py = static_cast<int>(std::floor((p.y - lo_.y) / cell_));
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = segs_.size();
    // Distance from p to the outside of the (2r+1)-cell block around its cell.
    const double fx = (p.x - lo_.x) / cell_ - px, fy = (p.y - lo_.y) / cell_ - py;
    const double margin = std::min({fx, 1.0 - fx, fy, 1.0 - fy}) * cell_;
    for (int r = 0;; ++r) {
      const int x0 = px - r, x1 = px + r, y0 = py - r, y1 = py + r;
      for (int y = std::max(y0, 0); y <= std::min(y1, ny_ - 1); ++y) {
        const bool edge_row = y == y0 || y == y1;
        for (int x = std::max(x0, 0); x <= std::min(x1, nx_ - 1); ++x) {
          if (!edge_row && x != x0 && x != x1) continue;
          for (std::size_t k : cells_[static_cast<std::size_t>(y) * nx_ + x]) {
            const double d = project_onto_segment(p, segs_[k].a, segs_[k].b).distance;
            if (d < best || (d == best && k < best_k)) {
              best = d;
              best_k = k;
            }
          }
        }
      }
      const bool covers = x0 <= 0 && y0 <= 0 && x1 >= nx_ - 1 && y1 >= ny_ - 1;
      if (covers || best < margin + r * cell_) break;
    }
    const Segment& s = segs_[best_k];
    return cross(s.b - s.a, p - s.a) < 0.0 ? -best : best;
  }

  double box_clearance(const OrientedBox& box) const {
    double worst = std::numeric_limits<double>::infinity();
    for (const Vec2& c : corners(box)) worst = std::min(worst, signed_distance(c));
    return worst;
  }

private:
  struct Segment {
    Vec2 a, b;
  };

  int cx(double x) const { return std::clamp(static_cast<int>(std::floor((x - lo_.x) / cell_)), 0, nx_ - 1); }
  int cy(double y) const { return std::clamp(static_cast<int>(std::floor((y - lo_.y) / cell_)), 0, ny_ - 1); }

  double cell_;
  std::vector<Segment> segs_;
  Vec2 lo_;
  int nx_ = 0, ny_ = 0;
  std::vector<std::vector<std::size_t>> cells_;
};

}  // namespace simagent::geometry
