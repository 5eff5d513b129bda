#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simagent/dynamics.hpp"
#include "simagent/eval/metrics.hpp"
#include "simagent/model/rollout.hpp"
#include "simagent/parallel.hpp"
#include "simagent/planner/planner.hpp"
#include "simagent/rng.hpp"

namespace simagent::planner {

/// Everything except the AV, advanced one step at a time.
class Environment {
public:
  virtual ~Environment() = default;
  /// States of all agents at the current step (the AV entry is whatever the environment last saw).
  virtual const std::vector<dynamics::KinematicState>& states() const = 0;
  /// Agents that exist at the current step.
  virtual const std::vector<bool>& present() const = 0;
  /// Moves every non-AV agent one step; `av_next` is where the AV ended up.
  virtual void advance(const BicycleState& av_next) = 0;
};

class LogPlaybackEnvironment final : public Environment {
public:
  explicit LogPlaybackEnvironment(const Scenario& sc) : sc_(sc), log_(eval::log_playback(sc)) {
    states_ = eval::initial_states(sc);
    present_ = rl::active_agents(sc);
  }

  const std::vector<dynamics::KinematicState>& states() const override { return states_; }
  const std::vector<bool>& present() const override { return present_; }

  void advance(const BicycleState& /*av_next*/) override {
    if (t_ >= sc_.t_pred) throw std::logic_error("LogPlaybackEnvironment: past the end of the log");
    states_ = log_[static_cast<std::size_t>(t_)];
    for (int i = 0; i < sc_.num_agents(); ++i) {
      present_[i] = sc_.agents[i].current().valid && sc_.agents[i].future[t_].valid;
    }
    ++t_;
  }

private:
  const Scenario& sc_;
  eval::Trajectory log_;
  std::vector<dynamics::KinematicState> states_;
  std::vector<bool> present_;
  int t_ = 0;
};

/// Model-controlled agents, conditioned every step on the AV's executed states.
class ModelEnvironment final : public Environment {
public:
  ModelEnvironment(const model::BehaviorModel& m, const Scenario& sc, std::uint64_t seed, double temperature)
      : sc_(sc), session_(m, sc), rng_(seed), temperature_(temperature), present_(rl::active_agents(sc)) {}

  const std::vector<dynamics::KinematicState>& states() const override { return session_.states(); }
  const std::vector<bool>& present() const override { return present_; }

  void advance(const BicycleState& av_next) override {
    const nn::Matrix lp = session_.log_probs();
    const int n = sc_.num_agents();
    const int av = sc_.av_index;
    std::vector<int> tokens(static_cast<std::size_t>(n));
    std::vector<dynamics::KinematicState> next(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      if (i == av) continue;
      tokens[i] = model::sample_token(lp.row(i), temperature_, rng_);
      next[i] = dynamics::step(session_.states()[i], dynamics::decode_action(tokens[i]), sc_.dt);
    }
    next[av] = {av_next.position, av_next.velocity(), av_next.heading};
    tokens[av] = dynamics::encode_action((next[av].velocity - session_.states()[av].velocity) / sc_.dt);
    session_.commit(tokens, next);
  }

private:
  const Scenario& sc_;
  model::BehaviorModel::Session session_;
  Rng rng_;
  double temperature_;
  std::vector<bool> present_;
};

/// Builds the environment for one scenario; `seed` is fixed per scenario so every planner faces the same draws.
using EnvironmentFactory = std::function<std::unique_ptr<Environment>(const Scenario&, std::uint64_t seed)>;

struct SimAgentEntry {
  std::string name;
  EnvironmentFactory make;
};

inline SimAgentEntry log_playback_agent() {
  return {"Log", [](const Scenario& sc, std::uint64_t) { return std::make_unique<LogPlaybackEnvironment>(sc); }};
}

/// The model must outlive the returned entry.
inline SimAgentEntry model_agent(std::string name, const model::BehaviorModel& m, double temperature = 1.0) {
  return {std::move(name), [&m, temperature](const Scenario& sc, std::uint64_t seed) {
            return std::make_unique<ModelEnvironment>(m, sc, seed, temperature);
          }};
}

struct PolicyInput {
  const Scenario& sc;
  const RewardContext& ctx;
  int step;  // 0-based index of the step being planned
  BicycleState av;
  AgentForecast forecast;
};

/// Returns the AV state after one step.
using Policy = std::function<BicycleState(const PolicyInput&)>;

inline Policy mpc_policy(PlannerSpec spec, VehicleParams vehicle = {}) {
  spec.validate();
  vehicle.validate();
  return [spec, vehicle](const PolicyInput& in) {
    const auto [steer, accel] = mpc_step(in.av, spec, vehicle, in.ctx, in.forecast, in.sc);
    return bicycle_step(in.av, steer, accel, in.sc.dt, vehicle.wheelbase);
  };
}

/// Follows the logged AV trajectory exactly; holds position where the log is invalid.
inline Policy gt_replay_policy() {
  return [](const PolicyInput& in) {
    const FuturePoint& f = in.sc.agents[in.sc.av_index].future[in.step];
    if (!f.valid) return in.av;
    BicycleState n;
    n.position = f.position;
    const Vec2 v = (f.position - in.av.position) / in.sc.dt;
    n.speed = v.norm();
    n.heading = n.speed >= dynamics::kHeadingMinSpeed ? std::atan2(v.y, v.x) : in.av.heading;
    return n;
  };
}

/// Full throttle, steering hard toward the nearest forecast agent.
inline Policy reckless_policy(VehicleParams vehicle = {}) {
  vehicle.validate();
  return [vehicle](const PolicyInput& in) {
    double steer = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& s : in.forecast.states) {
      const Vec2 d = s.position - in.av.position;
      if (d.squared_norm() < best) {
        best = d.squared_norm();
        const double bearing = wrap_angle(std::atan2(d.y, d.x) - in.av.heading);
        steer = std::clamp(bearing, -vehicle.max_steer, vehicle.max_steer);
      }
    }
    return bicycle_step(in.av, steer, vehicle.accel_max, in.sc.dt, vehicle.wheelbase);
  };
}

inline BicycleState av_initial_state(const Scenario& sc) {
  const auto s = dynamics::initial_state(sc, sc.av_index);
  return {s.position, s.heading, s.velocity.norm()};
}

struct EpisodeResult {
  double total = 0.0;
  int collisions = 0;
  int offroad = 0;
  int offroute = 0;
  double progress = 0.0;
};

/// Undiscounted return of one closed-loop episode over the scenario horizon.
inline EpisodeResult run_episode(const Scenario& sc, const Policy& policy, Environment& env,
                                 const RewardWeights& weights) {
  const RewardContext ctx(sc, weights);
  BicycleState av = av_initial_state(sc);
  EpisodeResult out;
  for (int t = 0; t < sc.t_pred; ++t) {
    AgentForecast forecast;
    for (int i = 0; i < sc.num_agents(); ++i) {
      if (i == sc.av_index || !env.present()[i]) continue;
      forecast.agents.push_back(i);
      forecast.states.push_back(env.states()[i]);
    }
    const BicycleState next = policy(PolicyInput{sc, ctx, t, av, std::move(forecast)});
    env.advance(next);
    std::vector<geometry::OrientedBox> others;
    for (int i = 0; i < sc.num_agents(); ++i) {
      if (i == sc.av_index || !env.present()[i]) continue;
      const auto& s = env.states()[i];
      others.push_back(sc.box(i, s.position, s.heading));
    }
    const StepTerms terms = ctx.terms(av, next, others);
    out.total += terms.reward(weights);
    out.collisions += terms.collision;
    out.offroad += terms.offroad;
    out.offroute += terms.offroute;
    out.progress += terms.progress;
    av = next;
  }
  return out;
}

/// Mean return over scenarios. Scenario k's environment gets stream_seed(seed, k).
inline double evaluate_planner(const Policy& policy, const SimAgentEntry& agent, const std::vector<Scenario>& data,
                               const RewardWeights& weights, std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("evaluate_planner: no scenarios");
  double total = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    auto env = agent.make(data[k], stream_seed(seed, k));
    total += run_episode(data[k], policy, *env, weights).total;
  }
  return total / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Scoring sim agents against each other

/// Ranks starting at 1; tied values share the mean of their positions.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t s = 0; s < order.size();) {
    std::size_t e = s;
    while (e + 1 < order.size() && v[order[e + 1]] == v[order[s]]) ++e;
    const double r = 0.5 * static_cast<double>(s + e) + 1.0;
    for (std::size_t k = s; k <= e; ++k) ranks[order[k]] = r;
    s = e + 1;
  }
  return ranks;
}

/// Pearson correlation of average ranks. A constant list has no ranking; that case returns 0
/// unless both rank vectors are identical.
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("spearman: needs at least 2 values");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  if (ra == rb) return 1.0;
  const double mean = 0.5 * static_cast<double>(a.size() + 1);
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t k = 0; k < ra.size(); ++k) {
    cov += (ra[k] - mean) * (rb[k] - mean);
    va += (ra[k] - mean) * (ra[k] - mean);
    vb += (rb[k] - mean) * (rb[k] - mean);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

inline double mean_absolute_error(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw std::invalid_argument("mean_absolute_error: bad lengths");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
  return s / static_cast<double>(a.size());
}

struct PlannerFamilyConfig {
  std::vector<int> j_values{9, 12, 16, 20, 25, 30, 36, 42, 49, 56, 64, 68, 72, 76, 79, 81};
  std::vector<int> d_values{6, 8, 12, 16};

  std::vector<PlannerSpec> specs() const {
    std::vector<PlannerSpec> out;
    for (int j : j_values) {
      for (int d : d_values) out.push_back({j, d});
    }
    return out;
  }
};

struct EvalMatrix {
  std::vector<std::string> sim_agents;
  std::vector<std::string> planners;
  std::vector<std::vector<double>> returns;           // [agent][planner]
  std::vector<std::vector<double>> rank_correlation;  // [agent][agent]
  std::vector<std::vector<double>> absolute_error;    // [agent][agent]

  std::size_t index_of(const std::string& name) const {
    const auto it = std::find(sim_agents.begin(), sim_agents.end(), name);
    if (it == sim_agents.end()) throw std::out_of_range("EvalMatrix: no sim agent '" + name + "'");
    return static_cast<std::size_t>(it - sim_agents.begin());
  }

  nlohmann::json to_json() const {
    return {{"sim_agents", sim_agents},
            {"planners", planners},
            {"returns", returns},
            {"rank_correlation", rank_correlation},
            {"absolute_error", absolute_error}};
  }

  /// Rows: (metric, sim agent); columns: every sim agent, the first being the ground truth.
  std::string to_csv() const {
    auto fmt = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.9g", v);
      return std::string(buf);
    };
    std::string s = "metric,sim_agent";
    for (const auto& n : sim_agents) s += "," + n;
    s += "\n";
    for (const auto& [label, table] : {std::pair{"rank_correlation", &rank_correlation},
                                      std::pair{"absolute_error", &absolute_error}}) {
      for (std::size_t a = 0; a < sim_agents.size(); ++a) {
        s += std::string(label) + "," + sim_agents[a];
        for (double v : (*table)[a]) s += "," + fmt(v);
        s += "\n";
      }
    }
    return s;
  }
};

/// Mean return of every (sim agent, planner) cell, then pairwise rank correlation and absolute error.
/// Every cell sees the same per-scenario seeds; results do not depend on `threads`.
inline EvalMatrix score_sim_agents(const std::vector<SimAgentEntry>& agents, const std::vector<PlannerSpec>& planners,
                                   const std::vector<Scenario>& data, const RewardWeights& weights,
                                   const VehicleParams& vehicle, std::uint64_t seed, int threads = 1) {
  if (agents.empty()) throw std::invalid_argument("score_sim_agents: no sim agents");
  if (planners.size() < 2) throw std::invalid_argument("score_sim_agents: needs at least 2 planners");
  EvalMatrix m;
  for (const auto& a : agents) m.sim_agents.push_back(a.name);
  for (const auto& p : planners) m.planners.push_back(p.name());
  m.returns.assign(agents.size(), std::vector<double>(planners.size()));
  parallel_for(agents.size() * planners.size(), threads, [&](std::size_t cell) {
    const std::size_t a = cell / planners.size(), p = cell % planners.size();
    m.returns[a][p] = evaluate_planner(mpc_policy(planners[p], vehicle), agents[a], data, weights, seed);
  });
  const std::size_t n = agents.size();
  m.rank_correlation.assign(n, std::vector<double>(n));
  m.absolute_error.assign(n, std::vector<double>(n));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      m.rank_correlation[a][b] = spearman(m.returns[a], m.returns[b]);
      m.absolute_error[a][b] = mean_absolute_error(m.returns[a], m.returns[b]);
    }
  }
  return m;
}

}  // namespace simagent::planner
