#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "simagent/dynamics.hpp"
#include "simagent/edge_index.hpp"
#include "simagent/geometry.hpp"
#include "simagent/json_fields.hpp"
#include "simagent/scenario.hpp"

namespace simagent::planner {

struct VehicleParams {
  double wheelbase = 2.8;
  double max_steer = 0.4;
  double accel_min = -4.0;
  double accel_max = 3.0;

  void validate() const {
    if (!(wheelbase > 0.0)) throw ConfigError("vehicle: wheelbase must be positive");
    if (!(max_steer >= 0.0)) throw ConfigError("vehicle: max_steer must be >= 0");
    if (!(accel_max >= accel_min)) throw ConfigError("vehicle: accel_max must be >= accel_min");
  }
};

struct PlannerSpec {
  int j = 9;
  int d = 8;

  void validate() const {
    if (j < 1 || d < 1) throw ConfigError("planner: J and D must be >= 1");
  }
  std::string name() const { return "J" + std::to_string(j) + "_D" + std::to_string(d); }
};

struct RewardWeights {
  double collision = -10.0;
  double offroad = -1.0;
  double offroute = -1.0;
  double progress = 1e-4;
  double offroute_threshold = 2.5;
  double d_offroad = 0.0;

  void validate() const {
    if (!(offroute_threshold > 0.0)) throw ConfigError("planner: offroute_threshold must be positive");
  }
};

/// Kinematic bicycle state; speed never goes negative.
struct BicycleState {
  Vec2 position;
  double heading = 0.0;
  double speed = 0.0;

  Vec2 velocity() const { return Vec2{std::cos(heading), std::sin(heading)} * speed; }
};

inline BicycleState bicycle_step(const BicycleState& s, double steer, double accel, double dt, double wheelbase) {
  BicycleState n;
  n.position = s.position + Vec2{std::cos(s.heading), std::sin(s.heading)} * (s.speed * dt);
  n.heading = wrap_angle(s.heading + s.speed / wheelbase * std::tan(steer) * dt);
  n.speed = std::max(0.0, s.speed + accel * dt);
  return n;
}

/// (steering samples, acceleration samples) with the product J, as square as possible; ties favor steering.
inline std::pair<int, int> factor_j(int j) {
  if (j < 1) throw std::invalid_argument("factor_j: J must be >= 1");
  int a = static_cast<int>(std::floor(std::sqrt(static_cast<double>(j))));
  while (j % a != 0) --a;
  return {j / a, a};
}

/// n evenly spaced values over [lo, hi]; the one closest to zero is set to exactly 0 when 0 is in range.
inline std::vector<double> control_grid(double lo, double hi, int n) {
  std::vector<double> v;
  if (n == 1) {
    v.push_back(std::clamp(0.0, lo, hi));
    return v;
  }
  for (int k = 0; k < n; ++k) v.push_back(lo + (hi - lo) * k / (n - 1));
  if (lo <= 0.0 && hi >= 0.0) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k) {
      if (std::abs(v[k]) < std::abs(v[best])) best = k;
    }
    v[best] = 0.0;
  }
  return v;
}

struct Candidate {
  double steer = 0.0;
  double accel = 0.0;
  std::vector<BicycleState> states;  // states[0] is the current state, then D steps
};

/// Candidates ordered steering-major: index = is * j_a + ia.
inline std::vector<Candidate> trajectory_library(const PlannerSpec& spec, const BicycleState& start,
                                                 const VehicleParams& vehicle, double dt) {
  spec.validate();
  const auto [js, ja] = factor_j(spec.j);
  const auto steers = control_grid(-vehicle.max_steer, vehicle.max_steer, js);
  const auto accels = control_grid(vehicle.accel_min, vehicle.accel_max, ja);
  std::vector<Candidate> out;
  out.reserve(static_cast<std::size_t>(spec.j));
  for (double st : steers) {
    for (double ac : accels) {
      Candidate c{st, ac, {start}};
      for (int k = 0; k < spec.d; ++k) c.states.push_back(bicycle_step(c.states.back(), st, ac, dt, vehicle.wheelbase));
      out.push_back(std::move(c));
    }
  }
  return out;
}

/// Logged AV path used for off-route and progress terms.
struct RouteReference {
  std::vector<Vec2> polyline;

  static RouteReference from_log(const Scenario& sc) {
    RouteReference r;
    const Agent& av = sc.agents[sc.av_index];
    auto push = [&](Vec2 p) {
      if (r.polyline.empty() || !(r.polyline.back() == p)) r.polyline.push_back(p);
    };
    if (av.current().valid) push(av.current().position);
    for (const FuturePoint& f : av.future) {
      if (f.valid) push(f.position);
    }
    if (r.polyline.size() < 2) {
      // stationary AV: a short stub along its heading keeps the projection defined
      const Vec2 p = av.current().position;
      r.polyline = {p, p + Vec2{std::cos(av.current().heading), std::sin(av.current().heading)} * 1e-3};
    }
    return r;
  }
};

struct StepTerms {
  bool collision = false;
  bool offroad = false;
  bool offroute = false;
  double progress = 0.0;

  double reward(const RewardWeights& w) const {
    return w.collision * collision + w.offroad * offroad + w.offroute * offroute + w.progress * progress;
  }
};

/// Geometry shared by every reward evaluation in one scenario.
class RewardContext {
public:
  RewardContext(const Scenario& sc, RewardWeights weights)
      : sc_(&sc), weights_(weights), edges_(sc.map), route_(RouteReference::from_log(sc)) {
    weights_.validate();
  }

  const RewardWeights& weights() const { return weights_; }
  const RouteReference& route() const { return route_; }
  const geometry::RoadEdgeIndex& edges() const { return edges_; }

  geometry::OrientedBox av_box(const BicycleState& s) const { return sc_->box(sc_->av_index, s.position, s.heading); }

  /// Terms for the AV moving from `prev` to `now` while the other agents occupy `others`.
  StepTerms terms(const BicycleState& prev, const BicycleState& now,
                  const std::vector<geometry::OrientedBox>& others) const {
    StepTerms t;
    const geometry::OrientedBox box = av_box(now);
    const double reach = 0.5 * std::hypot(box.length, box.width);
    for (const geometry::OrientedBox& o : others) {
      const double r = reach + 0.5 * std::hypot(o.length, o.width);
      if ((o.center - box.center).squared_norm() > r * r) continue;
      if (geometry::boxes_overlap(box, o)) {
        t.collision = true;
        break;
      }
    }
    t.offroad = !edges_.empty() && edges_.box_clearance(box) < weights_.d_offroad;
    const auto p_now = geometry::project_onto_polyline(now.position, route_.polyline);
    const auto p_prev = geometry::project_onto_polyline(prev.position, route_.polyline);
    t.offroute = p_now.distance > weights_.offroute_threshold;
    t.progress = p_now.arc_length - p_prev.arc_length;
    return t;
  }

  double reward(const BicycleState& prev, const BicycleState& now,
                const std::vector<geometry::OrientedBox>& others) const {
    return terms(prev, now, others).reward(weights_);
  }

private:
  const Scenario* sc_;
  RewardWeights weights_;
  geometry::RoadEdgeIndex edges_;
  RouteReference route_;
};

/// What the planner believes about the other agents: current states, extrapolated at constant velocity.
struct AgentForecast {
  std::vector<int> agents;
  std::vector<dynamics::KinematicState> states;

  std::vector<geometry::OrientedBox> boxes_at(const Scenario& sc, int k, double dt) const {
    std::vector<geometry::OrientedBox> out;
    out.reserve(agents.size());
    for (std::size_t a = 0; a < agents.size(); ++a) {
      const auto& s = states[a];
      out.push_back(sc.box(agents[a], s.position + s.velocity * (dt * k), s.heading));
    }
    return out;
  }
};

/// Index of the best candidate; ties go to the lowest index.
inline std::size_t mpc_select(const std::vector<Candidate>& library, const RewardContext& ctx,
                              const AgentForecast& forecast, const Scenario& sc) {
  if (library.empty()) throw std::invalid_argument("mpc_select: empty library");
  const std::size_t depth = library[0].states.size() - 1;
  std::vector<std::vector<geometry::OrientedBox>> boxes;
  for (std::size_t k = 1; k <= depth; ++k) boxes.push_back(forecast.boxes_at(sc, static_cast<int>(k), sc.dt));
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < library.size(); ++c) {
    double score = 0.0;
    for (std::size_t k = 1; k <= depth; ++k) score += ctx.reward(library[c].states[k - 1], library[c].states[k], boxes[k - 1]);
    if (score > best_score) {
      best_score = score;
      best = c;
    }
  }
  return best;
}

/// Chosen (steering, acceleration) for the current state.
inline std::pair<double, double> mpc_step(const BicycleState& state, const PlannerSpec& spec,
                                          const VehicleParams& vehicle, const RewardContext& ctx,
                                          const AgentForecast& forecast, const Scenario& sc) {
  const auto lib = trajectory_library(spec, state, vehicle, sc.dt);
  const Candidate& c = lib[mpc_select(lib, ctx, forecast, sc)];
  return {c.steer, c.accel};
}

}  // namespace simagent::planner
