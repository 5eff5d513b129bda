#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace simagent {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
  constexpr Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;

  double norm() const { return std::hypot(x, y); }
  constexpr double squared_norm() const { return x * x + y * y; }
};

constexpr Vec2 operator*(double s, Vec2 v) { return v * s; }
constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  if (a > std::numbers::pi) a -= two_pi;
  return a;
}

enum class ObjectType { vehicle, pedestrian, cyclist };
enum class FeatureType { lane_center, road_edge, route };

inline std::string_view to_string(ObjectType t) {
  switch (t) {
    case ObjectType::vehicle: return "vehicle";
    case ObjectType::pedestrian: return "pedestrian";
    case ObjectType::cyclist: return "cyclist";
  }
  return "vehicle";
}

inline std::string_view to_string(FeatureType t) {
  switch (t) {
    case FeatureType::lane_center: return "lane_center";
    case FeatureType::road_edge: return "road_edge";
    case FeatureType::route: return "route";
  }
  return "lane_center";
}

inline ObjectType object_type_from_string(std::string_view s) {
  if (s == "vehicle") return ObjectType::vehicle;
  if (s == "pedestrian") return ObjectType::pedestrian;
  if (s == "cyclist") return ObjectType::cyclist;
  throw std::invalid_argument("unknown object type '" + std::string(s) + "'");
}

inline FeatureType feature_type_from_string(std::string_view s) {
  if (s == "lane_center") return FeatureType::lane_center;
  if (s == "road_edge") return FeatureType::road_edge;
  if (s == "route") return FeatureType::route;
  throw std::invalid_argument("unknown map feature type '" + std::string(s) + "'");
}

/// Road edges are oriented so that the drivable area lies on their left.
struct MapFeature {
  std::vector<Vec2> polyline;
  FeatureType type = FeatureType::lane_center;

  bool operator==(const MapFeature&) const = default;
};

struct AgentState {
  Vec2 position;
  Vec2 velocity;
  double heading = 0.0;
  double length = 4.5;
  double width = 2.0;
  ObjectType type = ObjectType::vehicle;
  bool valid = true;

  bool operator==(const AgentState&) const = default;
};

}  // namespace simagent
