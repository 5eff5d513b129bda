#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "simagent/geometry.hpp"
#include "simagent/rng.hpp"
#include "simagent/types.hpp"

namespace simagent {

/// Desk-scale agent cap; the file schema itself admits up to kSchemaMaxAgents.
inline constexpr int kMaxAgents = 32;
inline constexpr int kSchemaMaxAgents = 128;

struct FuturePoint {
  Vec2 position;
  bool valid = true;

  bool operator==(const FuturePoint&) const = default;
};

struct Agent {
  ObjectType type = ObjectType::vehicle;
  double length = 4.5;
  double width = 2.0;
  std::vector<AgentState> history;  // steps -t_prev .. 0
  std::vector<FuturePoint> future;  // steps 1 .. t_pred

  const AgentState& current() const { return history.back(); }
  bool operator==(const Agent&) const = default;
};

struct Scenario {
  std::string id;
  double dt = 0.1;
  int t_prev = 10;
  int t_pred = 80;
  int av_index = 0;
  std::vector<Agent> agents;
  std::vector<MapFeature> map;

  int num_agents() const { return static_cast<int>(agents.size()); }
  bool operator==(const Scenario&) const = default;

  /// Box of agent i at rollout step t (0 = current) given a position and heading.
  geometry::OrientedBox box(int i, Vec2 position, double heading) const {
    return {position, heading, agents[i].length, agents[i].width};
  }

  void validate() const {
    auto fail = [&](const std::string& what) { throw std::invalid_argument("scenario '" + id + "': " + what); };
    if (agents.empty()) fail("needs at least one agent");
    if (num_agents() > kSchemaMaxAgents) fail("too many agents");
    if (!(dt > 0.0)) fail("dt must be positive");
    if (t_prev < 1 || t_pred < 1) fail("t_prev and t_pred must be >= 1");
    if (av_index < 0 || av_index >= num_agents()) fail("av_index out of range");
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const Agent& a = agents[i];
      const std::string tag = "agent " + std::to_string(i) + ": ";
      if (static_cast<int>(a.history.size()) != t_prev + 1) fail(tag + "history length mismatch");
      if (static_cast<int>(a.future.size()) != t_pred) fail(tag + "future length mismatch");
      if (!(a.length > 0.0 && a.width > 0.0)) fail(tag + "non-positive extent");
      for (const AgentState& s : a.history) {
        if (!s.valid) continue;
        if (!std::isfinite(s.position.x) || !std::isfinite(s.position.y) || !std::isfinite(s.velocity.x) ||
            !std::isfinite(s.velocity.y) || !std::isfinite(s.heading)) {
          fail(tag + "non-finite history state");
        }
      }
      for (const FuturePoint& f : a.future) {
        if (f.valid && (!std::isfinite(f.position.x) || !std::isfinite(f.position.y))) fail(tag + "non-finite future");
      }
    }
    for (const MapFeature& f : map) {
      if (f.polyline.size() < 2) fail("map polyline with fewer than 2 points");
      for (std::size_t k = 0; k + 1 < f.polyline.size(); ++k) {
        if (f.polyline[k] == f.polyline[k + 1]) fail("map polyline with repeated consecutive points");
      }
    }
  }
};

/// Positions p_{-1}, p_0, p_1 .. p_T of one agent with validity, as used for target reconstruction.
inline void anchored_positions(const Scenario& sc, int i, std::vector<Vec2>& positions, std::vector<bool>& valid) {
  const Agent& a = sc.agents[i];
  positions.clear();
  valid.clear();
  const AgentState& prev = a.history[a.history.size() - 2];
  positions.push_back(prev.position);
  valid.push_back(prev.valid);
  positions.push_back(a.current().position);
  valid.push_back(a.current().valid);
  for (const FuturePoint& f : a.future) {
    positions.push_back(f.position);
    valid.push_back(f.valid);
  }
}

// ---------------------------------------------------------------------------
// Synthetic generator

enum class RoadLayout { straight, curved, intersection };

inline std::string_view to_string(RoadLayout l) {
  switch (l) {
    case RoadLayout::straight: return "straight";
    case RoadLayout::curved: return "curved";
    case RoadLayout::intersection: return "intersection";
  }
  return "straight";
}

inline RoadLayout road_layout_from_string(std::string_view s) {
  if (s == "straight") return RoadLayout::straight;
  if (s == "curved") return RoadLayout::curved;
  if (s == "intersection") return RoadLayout::intersection;
  throw std::invalid_argument("unknown road layout '" + std::string(s) + "'");
}

struct GeneratorConfig {
  int num_agents = 8;
  int t_pred = 80;
  RoadLayout layout = RoadLayout::straight;
  double density = 1.0;  // > 1 packs agents tighter
  bool conflict = false;
  /// When set, every agent starts at this speed and keeps it (no car-following).
  std::optional<double> constant_speed;
};

namespace detail {

inline constexpr double kLaneWidth = 3.5;
inline constexpr double kRoadHalfWidth = 3.5;
inline constexpr int kTPrev = 10;
inline constexpr double kDt = 0.1;

/// Straight or constant-curvature reference line with a Frenet frame (d positive to the left).
struct ReferenceLine {
  Vec2 origin;
  double heading = 0.0;
  double curvature = 0.0;

  double tangent(double s) const { return heading + curvature * s; }

  Vec2 point(double s, double d) const {
    if (curvature == 0.0) {
      const Vec2 f{std::cos(heading), std::sin(heading)};
      const Vec2 n{-f.y, f.x};
      return origin + f * s + n * d;
    }
    const double r = 1.0 / curvature;
    const Vec2 center = origin + Vec2{-std::sin(heading), std::cos(heading)} * r;
    const double theta = tangent(s);
    const Vec2 n{-std::sin(theta), std::cos(theta)};
    return center - n * (r - d);
  }
};

struct SimAgent {
  int line = 0;
  double s = 0.0;
  double v = 0.0;
  double v0 = 10.0;
  double d0 = 0.0;
  double d1 = 0.0;
  double lane_change_start = 1e9;  // seconds since simulation start
  double lane_change_duration = 2.5;
  double length = 4.5;
  double width = 2.0;
  bool constant_speed = false;
  bool obeys_stop_line = false;
  double stop_line = 0.0;
  double brake_start = 1e9;  // seconds; scripted constant deceleration to a stop from here on
  double brake_decel = 0.0;

  double lateral(double time) const {
    if (time <= lane_change_start) return d0;
    const double u = std::min(1.0, (time - lane_change_start) / lane_change_duration);
    return d0 + (d1 - d0) * 0.5 * (1.0 - std::cos(std::numbers::pi * u));
  }
};

struct IdmParams {
  double a = 1.5;
  double b = 2.0;
  double headway = 1.2;
  double s0 = 2.0;
  double a_lo = -5.0;
  double a_hi = 2.0;
};

inline double idm_accel(double v, double v0, std::optional<std::pair<double, double>> leader_gap_speed,
                        const IdmParams& p) {
  double free = 1.0 - std::pow(v / std::max(v0, 0.1), 4.0);
  double interaction = 0.0;
  if (leader_gap_speed) {
    const auto [gap, vl] = *leader_gap_speed;
    const double s_star = p.s0 + std::max(0.0, v * p.headway + v * (v - vl) / (2.0 * std::sqrt(p.a * p.b)));
    const double g = std::max(gap, 0.1);
    interaction = (s_star / g) * (s_star / g);
  }
  return std::clamp(p.a * (free - interaction), p.a_lo, p.a_hi);
}

struct SimResult {
  std::vector<std::vector<Vec2>> pos;  // [step][agent]
  double s_min = 0.0;
  double s_max = 0.0;
};

/// Simulates all agents for `steps` transitions.
inline SimResult simulate(std::vector<SimAgent> agents, const std::vector<ReferenceLine>& lines, int steps,
                          const IdmParams& idm) {
  SimResult res;
  auto& out = res.pos;
  out.assign(steps + 1, std::vector<Vec2>(agents.size()));
  res.s_min = 1e18;
  res.s_max = -1e18;
  auto record = [&](int k) {
    for (std::size_t i = 0; i < agents.size(); ++i) {
      out[k][i] = lines[agents[i].line].point(agents[i].s, agents[i].lateral(k * kDt));
      res.s_min = std::min(res.s_min, agents[i].s);
      res.s_max = std::max(res.s_max, agents[i].s);
    }
  };
  record(0);
  std::vector<double> accel(agents.size());
  for (int k = 0; k < steps; ++k) {
    const double time = k * kDt;
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const SimAgent& me = agents[i];
      if (time >= me.brake_start - 1e-9) {
        accel[i] = -std::min(me.brake_decel, me.v / kDt);
        continue;
      }
      if (me.constant_speed) {
        accel[i] = 0.0;
        continue;
      }
      std::optional<std::pair<double, double>> lead;
      const double my_d = me.lateral(time);
      for (std::size_t j = 0; j < agents.size(); ++j) {
        if (j == i || agents[j].line != me.line) continue;
        if (std::abs(agents[j].lateral(time) - my_d) >= 2.5) continue;
        const double ds = agents[j].s - me.s;
        if (ds <= 0.0) continue;
        const double gap = ds - 0.5 * (agents[j].length + me.length);
        if (!lead || gap < lead->first) lead = std::make_pair(gap, agents[j].v);
      }
      if (me.obeys_stop_line && me.s + 0.5 * me.length <= me.stop_line + 0.5) {
        const double gap = me.stop_line - (me.s + 0.5 * me.length);
        if (!lead || gap < lead->first) lead = std::make_pair(gap, 0.0);
      }
      accel[i] = idm_accel(me.v, me.v0, lead, idm);
    }
    for (std::size_t i = 0; i < agents.size(); ++i) {
      SimAgent& me = agents[i];
      me.v = std::max(0.0, me.v + accel[i] * kDt);
      me.s += me.v * kDt;
    }
    record(k + 1);
  }
  return res;
}

inline std::vector<Vec2> sample_line(const ReferenceLine& line, double s_lo, double s_hi, double d, double step = 2.0) {
  std::vector<Vec2> pts;
  const int n = std::max(1, static_cast<int>(std::ceil((s_hi - s_lo) / step)));
  for (int k = 0; k <= n; ++k) pts.push_back(line.point(s_lo + (s_hi - s_lo) * k / n, d));
  return pts;
}

/// Splits a dense polyline into features of roughly `chunk` meters sharing endpoints.
inline void push_chunked(std::vector<MapFeature>& map, const std::vector<Vec2>& pts, FeatureType type,
                         double chunk = 20.0) {
  std::vector<Vec2> cur{pts.front()};
  double acc = 0.0;
  for (std::size_t k = 1; k < pts.size(); ++k) {
    acc += (pts[k] - pts[k - 1]).norm();
    cur.push_back(pts[k]);
    if (acc >= chunk && k + 1 < pts.size()) {
      map.push_back({cur, type});
      cur = {pts[k]};
      acc = 0.0;
    }
  }
  if (cur.size() >= 2) map.push_back({cur, type});
}

inline std::vector<Vec2> reversed(std::vector<Vec2> v) {
  std::reverse(v.begin(), v.end());
  return v;
}

inline std::vector<Vec2> densify(const std::vector<Vec2>& corners, double step = 2.0) {
  std::vector<Vec2> out{corners.front()};
  for (std::size_t k = 0; k + 1 < corners.size(); ++k) {
    const Vec2 a = corners[k], b = corners[k + 1];
    const int n = std::max(1, static_cast<int>(std::ceil((b - a).norm() / step)));
    for (int j = 1; j <= n; ++j) out.push_back(a + (b - a) * (static_cast<double>(j) / n));
  }
  return out;
}

struct Layout {
  std::vector<ReferenceLine> lines;
  std::vector<SimAgent> agents;
  std::vector<int> av_candidates;
  IdmParams idm;
};

inline Layout build_corridor(Rng& rng, const GeneratorConfig& cfg) {
  Layout lay;
  ReferenceLine line;
  line.heading = rng.uniform(-std::numbers::pi, std::numbers::pi);
  if (cfg.layout == RoadLayout::curved) {
    line.curvature = (rng.uniform() < 0.5 ? -1.0 : 1.0) / rng.uniform(150.0, 300.0);
  }
  lay.lines.push_back(line);
  if (cfg.conflict) lay.idm.headway = 0.9;

  const int n = cfg.num_agents;
  const double lane_d[2] = {-0.5 * kLaneWidth, 0.5 * kLaneWidth};
  double next_s[2] = {0.0, rng.uniform(-10.0, 10.0)};
  int first_in_lane[2] = {-1, -1};

  // Placement runs from the front of each lane backwards.
  for (int i = 0; i < n; ++i) {
    SimAgent a;
    const int lane = (cfg.conflict && i == 1) ? 1 : (i % 2);
    a.length = rng.uniform(4.2, 5.0);
    a.width = rng.uniform(1.8, 2.1);
    a.d0 = a.d1 = lane_d[lane];
    a.v = cfg.constant_speed ? *cfg.constant_speed : rng.uniform(6.0, 14.0);
    a.v0 = a.v * rng.uniform(0.95, 1.1);
    a.constant_speed = cfg.constant_speed.has_value();
    if (first_in_lane[lane] < 0) {
      a.s = next_s[lane];
      first_in_lane[lane] = i;
    } else {
      const double gap = a.length + lay.idm.s0 + a.v * lay.idm.headway * rng.uniform(1.1, 2.2) / cfg.density;
      a.s = next_s[lane] - gap;
    }
    next_s[lane] = a.s;
    lay.agents.push_back(a);
  }

  if (cfg.conflict && n >= 2) {
    // Cut-in: slower agent 1 moves into lane 0 just ahead of agent 0 right after the current step.
    SimAgent& f = lay.agents[0];
    SimAgent& c = lay.agents[1];
    const double t_lc = (kTPrev + 1) * kDt + rng.uniform(0.0, 0.3);
    f.v0 = f.v;
    c.v = std::max(3.0, f.v - rng.uniform(0.0, 2.0));
    c.v0 = c.v;
    c.constant_speed = true;
    const double gap_at_lc = rng.uniform(1.0, 4.0);
    const double f_front_at_lc = f.s + f.v * t_lc + 0.5 * f.length;
    c.s = f_front_at_lc + gap_at_lc + 0.5 * c.length - c.v * t_lc;
    c.lane_change_start = t_lc;
    c.lane_change_duration = rng.uniform(1.8, 2.4);
    c.d1 = lane_d[0];
    // Agents initially ahead of the changer in lane 1 keep clear of it.
    for (int i = 2; i < n; ++i) {
      if (lay.agents[i].d0 == lane_d[1] && lay.agents[i].s > c.s - c.length - 3.0) {
        lay.agents[i].s = c.s - c.length - 8.0 - 10.0 * i;
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (!cfg.conflict || i != 1) {
      if (lay.agents[i].d0 == lane_d[0]) lay.av_candidates.push_back(i);
    }
  }
  return lay;
}

inline Layout build_intersection(Rng& rng, const GeneratorConfig& cfg) {
  Layout lay;
  const double h = 0.5 * kLaneWidth;
  // 0: +x (south lane), 1: -x, 2: +y (east lane), 3: -y.
  lay.lines = {{{0.0, -h}, 0.0, 0.0},
               {{0.0, h}, std::numbers::pi, 0.0},
               {{h, 0.0}, 0.5 * std::numbers::pi, 0.0},
               {{-h, 0.0}, -0.5 * std::numbers::pi, 0.0}};
  const int n = cfg.num_agents;
  double next_s[4];
  for (double& s : next_s) s = rng.uniform(-8.0, 2.0);
  // Crossing lanes queue upstream of their stop lines.
  next_s[2] = next_s[3] = -(kRoadHalfWidth + 1.0) - rng.uniform(20.0, 35.0);
  const int lane_cycle[4] = {0, 2, 1, 3};
  for (int i = 0; i < n; ++i) {
    SimAgent a;
    int lane = lane_cycle[i % 4];
    if (cfg.conflict && i == 1) lane = 2;
    a.line = lane;
    a.length = rng.uniform(4.2, 5.0);
    a.width = rng.uniform(1.8, 2.1);
    a.v = cfg.constant_speed ? *cfg.constant_speed : rng.uniform(5.0, 10.0);
    a.v0 = a.v * rng.uniform(0.95, 1.1);
    a.constant_speed = cfg.constant_speed.has_value();
    if (lane >= 2) {
      a.obeys_stop_line = !a.constant_speed;
      a.stop_line = -(kRoadHalfWidth + 1.0);
    }
    const double gap = a.length + lay.idm.s0 + a.v * lay.idm.headway * rng.uniform(1.1, 2.2) / cfg.density;
    a.s = next_s[lane];
    next_s[lane] -= gap;
    lay.agents.push_back(a);
  }
  if (cfg.conflict && n >= 2) {
    // Agents 0 (+x) and 1 (+y) would reach the crossing together at constant speed. A coin flip,
    // invisible in the history, picks the one that brakes to a stop right after the current step.
    SimAgent& a0 = lay.agents[0];
    SimAgent& a1 = lay.agents[1];
    const double t_now = (kTPrev + 1) * kDt;
    const double t_arrive = t_now + rng.uniform(0.8, 1.3);
    for (SimAgent* a : {&a0, &a1}) {
      a->constant_speed = true;
      a->obeys_stop_line = false;
      a->v = rng.uniform(6.0, 9.0);
      a->v0 = a->v;
      const double jitter = rng.uniform(-0.15, 0.15);
      a->s = -kRoadHalfWidth - 0.5 * a->length - a->v * (t_arrive + jitter);
    }
    SimAgent& yielder = rng.uniform() < 0.5 ? a0 : a1;
    yielder.brake_start = t_now + rng.uniform(0.0, 0.2);
    yielder.brake_decel = rng.uniform(4.0, 5.0);
    // Followers queue behind with room to stop.
    double s_back[4] = {a0.s, 0.0, a1.s, 0.0};
    for (int i = 2; i < n; ++i) {
      SimAgent& a = lay.agents[i];
      if (a.line == 0 || a.line == 2) {
        s_back[a.line] -= a.length + lay.idm.s0 + a.v * lay.idm.headway * rng.uniform(1.5, 2.5) / cfg.density + 6.0;
        a.s = s_back[a.line];
        a.obeys_stop_line = false;
        a.constant_speed = false;
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    if (lay.agents[i].line == 0 && !(cfg.conflict && i == 1)) lay.av_candidates.push_back(i);
  }
  if (lay.av_candidates.empty()) lay.av_candidates.push_back(0);
  return lay;
}

inline std::vector<MapFeature> build_map(const Layout& lay, const GeneratorConfig& cfg, const SimResult& sim) {
  std::vector<MapFeature> map;
  const auto& pos = sim.pos;
  if (cfg.layout != RoadLayout::intersection) {
    const ReferenceLine& line = lay.lines[0];
    double s_lo = sim.s_min, s_hi = sim.s_max;
    s_lo -= 15.0;
    s_hi += 15.0;
    for (double d : {-0.5 * kLaneWidth, 0.5 * kLaneWidth}) {
      push_chunked(map, sample_line(line, s_lo, s_hi, d), FeatureType::lane_center);
    }
    push_chunked(map, sample_line(line, s_lo, s_hi, -kRoadHalfWidth), FeatureType::road_edge);
    push_chunked(map, reversed(sample_line(line, s_lo, s_hi, kRoadHalfWidth)), FeatureType::road_edge);
  } else {
    double extent = 30.0;
    for (const auto& row : pos) {
      for (const Vec2& p : row) extent = std::max({extent, std::abs(p.x), std::abs(p.y)});
    }
    const double L = std::ceil(extent + 15.0);
    const double w = kRoadHalfWidth;
    for (const ReferenceLine& line : lay.lines) {
      push_chunked(map, sample_line(line, -L, L, 0.0), FeatureType::lane_center);
    }
    const std::vector<std::vector<Vec2>> corners = {{{L, w}, {w, w}, {w, L}},
                                                    {{-w, L}, {-w, w}, {-L, w}},
                                                    {{-L, -w}, {-w, -w}, {-w, -L}},
                                                    {{w, -L}, {w, -w}, {L, -w}}};
    for (const auto& c : corners) push_chunked(map, densify(c), FeatureType::road_edge);
  }
  return map;
}

inline double heading_from_velocity(Vec2 v, double fallback) {
  return v.norm() >= 0.1 ? std::atan2(v.y, v.x) : wrap_angle(fallback);
}

/// Per-step headings (history then future) following the dead-band rule.
inline std::vector<std::vector<double>> gt_headings(const Scenario& sc) {
  std::vector<std::vector<double>> out(sc.agents.size());
  for (std::size_t i = 0; i < sc.agents.size(); ++i) {
    const Agent& a = sc.agents[i];
    for (const AgentState& s : a.history) out[i].push_back(s.heading);
    Vec2 prev = a.current().position;
    double h = a.current().heading;
    for (const FuturePoint& f : a.future) {
      h = heading_from_velocity((f.position - prev) / sc.dt, h);
      out[i].push_back(h);
      prev = f.position;
    }
  }
  return out;
}

}  // namespace detail

/// True when any two agents' logged boxes overlap at any history or future step.
inline bool has_gt_overlap(const Scenario& sc) {
  const auto headings = detail::gt_headings(sc);
  const int steps = sc.t_prev + 1 + sc.t_pred;
  auto pos = [&](int i, int k) -> std::optional<Vec2> {
    const Agent& a = sc.agents[i];
    if (k <= sc.t_prev) return a.history[k].valid ? std::optional<Vec2>(a.history[k].position) : std::nullopt;
    const FuturePoint& f = a.future[k - sc.t_prev - 1];
    return f.valid ? std::optional<Vec2>(f.position) : std::nullopt;
  };
  for (int k = 0; k < steps; ++k) {
    for (int i = 0; i < sc.num_agents(); ++i) {
      const auto pi = pos(i, k);
      if (!pi) continue;
      for (int j = i + 1; j < sc.num_agents(); ++j) {
        const auto pj = pos(j, k);
        if (!pj) continue;
        if (geometry::boxes_overlap(sc.box(i, *pi, headings[i][k]), sc.box(j, *pj, headings[j][k]))) return true;
      }
    }
  }
  return false;
}

/// Deterministic synthetic scenario with collision-free logged trajectories.
inline Scenario generate_scenario(std::uint64_t seed, const GeneratorConfig& cfg) {
  if (cfg.num_agents < 1 || cfg.num_agents > kMaxAgents) {
    throw std::invalid_argument("generate_scenario: num_agents must be in [1, " + std::to_string(kMaxAgents) + "]");
  }
  if (cfg.t_pred < 1) throw std::invalid_argument("generate_scenario: t_pred must be >= 1");
  if (!(cfg.density > 0.0)) throw std::invalid_argument("generate_scenario: density must be positive");

  constexpr int kAttempts = 400;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Rng rng(stream_seed(seed, static_cast<std::uint64_t>(attempt)));
    detail::Layout lay = cfg.layout == RoadLayout::intersection ? detail::build_intersection(rng, cfg)
                                                                : detail::build_corridor(rng, cfg);
    const int steps = detail::kTPrev + 1 + cfg.t_pred;  // transitions from step -11
    const auto sim = detail::simulate(lay.agents, lay.lines, steps, lay.idm);
    const auto& pos = sim.pos;

    Scenario sc;
    sc.id = "syn-" + std::string(to_string(cfg.layout)) + (cfg.conflict ? "-conflict-" : "-") + std::to_string(seed);
    sc.dt = detail::kDt;
    sc.t_prev = detail::kTPrev;
    sc.t_pred = cfg.t_pred;
    for (std::size_t i = 0; i < lay.agents.size(); ++i) {
      const detail::SimAgent& sa = lay.agents[i];
      Agent a;
      a.length = sa.length;
      a.width = sa.width;
      double heading = lay.lines[sa.line].tangent(sa.s);
      for (int k = 1; k <= detail::kTPrev + 1; ++k) {
        AgentState st;
        st.position = pos[k][i];
        st.velocity = (pos[k][i] - pos[k - 1][i]) / detail::kDt;
        heading = detail::heading_from_velocity(st.velocity, heading);
        st.heading = heading;
        a.history.push_back(st);
      }
      for (int k = detail::kTPrev + 2; k <= steps; ++k) a.future.push_back({pos[k][i], true});
      sc.agents.push_back(std::move(a));
    }
    sc.av_index = lay.av_candidates[rng.below(lay.av_candidates.size())];
    sc.map = detail::build_map(lay, cfg, sim);
    // Route: the ego's logged path as sparse waypoints.
    {
      std::vector<Vec2> route;
      const Agent& av = sc.agents[sc.av_index];
      for (const AgentState& s : av.history) route.push_back(s.position);
      for (const FuturePoint& f : av.future) route.push_back(f.position);
      std::vector<Vec2> sparse;
      for (std::size_t k = 0; k < route.size(); k += 5) {
        if (sparse.empty() || !(sparse.back() == route[k])) sparse.push_back(route[k]);
      }
      if (!(sparse.back() == route.back())) sparse.push_back(route.back());
      if (sparse.size() >= 2) sc.map.push_back({sparse, FeatureType::route});
    }
    if (has_gt_overlap(sc)) continue;
    // Keep logged accelerations inside the action grid.
    bool accel_ok = true;
    for (int i = 0; i < sc.num_agents() && accel_ok; ++i) {
      for (int k = 1; k < steps; ++k) {
        const Vec2 acc = (pos[k + 1][i] - pos[k][i] * 2.0 + pos[k - 1][i]) / (detail::kDt * detail::kDt);
        if (std::abs(acc.x) > 5.5 || std::abs(acc.y) > 5.5) {
          accel_ok = false;
          break;
        }
      }
    }
    if (!accel_ok) continue;
    sc.validate();
    return sc;
  }
  throw std::runtime_error("generate_scenario: no collision-free layout found for seed " + std::to_string(seed));
}

}  // namespace simagent
