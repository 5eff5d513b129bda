#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simagent/dynamics.hpp"
#include "simagent/geometry.hpp"
#include "simagent/json_fields.hpp"
#include "simagent/nn/tensor.hpp"
#include "simagent/rl/reinforce.hpp"
#include "simagent/scenario.hpp"

namespace simagent::eval {

using nn::Matrix;

/// States indexed [t][i] for prediction steps 1..T.
using Trajectory = std::vector<std::vector<dynamics::KinematicState>>;

/// The logged future replayed as a rollout; invalid steps hold the last valid state.
inline Trajectory log_playback(const Scenario& sc) {
  const auto headings = detail::gt_headings(sc);
  Trajectory out(static_cast<std::size_t>(sc.t_pred), std::vector<dynamics::KinematicState>(sc.agents.size()));
  for (int i = 0; i < sc.num_agents(); ++i) {
    dynamics::KinematicState s = dynamics::initial_state(sc, i);
    for (int t = 0; t < sc.t_pred; ++t) {
      const FuturePoint& f = sc.agents[i].future[t];
      if (f.valid) {
        s.velocity = (f.position - s.position) / sc.dt;
        s.position = f.position;
        s.heading = headings[i][sc.t_prev + 1 + t];
      }
      out[t][i] = s;
    }
  }
  return out;
}

struct AdeResult {
  double ade = 0.0;
  double min_ade = 0.0;
};

/// Per-rollout ADE over valid (t, i); ade is the mean over rollouts, min_ade the minimum.
inline AdeResult ade(const std::vector<Trajectory>& rollouts, const Scenario& sc) {
  if (rollouts.empty()) throw std::invalid_argument("ade: no rollouts");
  AdeResult out;
  out.min_ade = std::numeric_limits<double>::infinity();
  for (const Trajectory& r : rollouts) {
    double sum = 0.0, count = 0.0;
    for (std::size_t t = 0; t < r.size(); ++t) {
      for (int i = 0; i < sc.num_agents(); ++i) {
        const FuturePoint& f = sc.agents[i].future[t];
        if (!f.valid || !sc.agents[i].current().valid) continue;
        sum += (r[t][i].position - f.position).norm();
        count += 1.0;
      }
    }
    if (count == 0.0) throw std::invalid_argument("ade: no valid entries in '" + sc.id + "'");
    out.ade += sum / count;
    out.min_ade = std::min(out.min_ade, sum / count);
  }
  out.ade /= static_cast<double>(rollouts.size());
  return out;
}

struct InteractionRates {
  double collision_rate = 0.0;
  double offroad_rate = 0.0;
};

/// Fractions of active agents with at least one overlap step / one step whose box clearance is below d_offroad.
inline InteractionRates interaction_rates(const Trajectory& r, const Scenario& sc, double d_offroad = 0.0) {
  const auto active = rl::active_agents(sc);
  const Matrix coll = rl::collision_table(r, sc);
  bool has_edges = false;
  for (const auto& f : sc.map) has_edges = has_edges || f.type == FeatureType::road_edge;
  double agents = 0.0, collided = 0.0, offroad = 0.0;
  for (int i = 0; i < sc.num_agents(); ++i) {
    if (!active[i]) continue;
    agents += 1.0;
    if (coll.rows() > 0 && coll.col(i).maxCoeff() > 0.0) collided += 1.0;
    if (!has_edges) continue;
    for (const auto& step : r) {
      const auto box = sc.box(i, step[i].position, step[i].heading);
      if (geometry::box_road_clearance(box, sc.map) < d_offroad) {
        offroad += 1.0;
        break;
      }
    }
  }
  if (agents == 0.0) return {};
  return {collided / agents, offroad / agents};
}

// ---------------------------------------------------------------------------
// Histogram likelihood

enum class Feature { linear_speed, linear_accel, angular_speed, nearest_distance };
inline constexpr std::array<Feature, 4> kFeatures{Feature::linear_speed, Feature::linear_accel, Feature::angular_speed,
                                                  Feature::nearest_distance};

inline std::string to_string(Feature f) {
  switch (f) {
    case Feature::linear_speed: return "linear_speed";
    case Feature::linear_accel: return "linear_accel";
    case Feature::angular_speed: return "angular_speed";
    case Feature::nearest_distance: return "nearest_distance";
  }
  return "?";
}

struct HistogramSpec {
  double lo = 0.0;
  double hi = 1.0;
  int bins = 32;
  double smoothing = 0.1;

  void validate(const std::string& name) const {
    if (bins < 1) throw ConfigError("histogram " + name + ": bins must be >= 1");
    if (!(hi > lo)) throw ConfigError("histogram " + name + ": hi must exceed lo");
    if (!(smoothing > 0.0)) throw ConfigError("histogram " + name + ": smoothing must be positive");
  }

  /// Values outside the range fall into the edge bins.
  int bin(double v) const {
    const int b = static_cast<int>(std::floor((v - lo) / (hi - lo) * bins));
    return std::clamp(b, 0, bins - 1);
  }
};

struct HistogramConfig {
  HistogramSpec linear_speed{0.0, 30.0};
  HistogramSpec linear_accel{-10.0, 10.0};
  HistogramSpec angular_speed{-2.0, 2.0};
  HistogramSpec nearest_distance{0.0, 50.0};

  HistogramSpec& at(Feature f) {
    switch (f) {
      case Feature::linear_speed: return linear_speed;
      case Feature::linear_accel: return linear_accel;
      case Feature::angular_speed: return angular_speed;
      case Feature::nearest_distance: return nearest_distance;
    }
    return linear_speed;
  }
  const HistogramSpec& at(Feature f) const { return const_cast<HistogramConfig*>(this)->at(f); }
};

/// Feature values [t][i] with validity; `initial` supplies the state before step 1.
struct FeatureTable {
  Matrix value;
  Matrix valid;
};

inline FeatureTable feature_table(const Trajectory& r, const std::vector<dynamics::KinematicState>& initial,
                                  const std::vector<std::vector<bool>>& valid, Feature f, double dt) {
  const int t_steps = static_cast<int>(r.size());
  const int n = t_steps ? static_cast<int>(r[0].size()) : 0;
  FeatureTable out{Matrix::Zero(t_steps, n), Matrix::Zero(t_steps, n)};
  for (int t = 0; t < t_steps; ++t) {
    for (int i = 0; i < n; ++i) {
      if (!valid[t][i]) continue;
      const auto& s = r[t][i];
      const auto& p = t > 0 ? r[t - 1][i] : initial[i];
      const bool prev_ok = t == 0 || valid[t - 1][i];
      const double dt_inv = 1.0 / dt;
      switch (f) {
        case Feature::linear_speed:
          out.value(t, i) = s.velocity.norm();
          out.valid(t, i) = 1.0;
          break;
        case Feature::linear_accel:
          if (!prev_ok) break;
          out.value(t, i) = (s.velocity.norm() - p.velocity.norm()) * dt_inv;
          out.valid(t, i) = 1.0;
          break;
        case Feature::angular_speed:
          if (!prev_ok) break;
          out.value(t, i) = wrap_angle(s.heading - p.heading) * dt_inv;
          out.valid(t, i) = 1.0;
          break;
        case Feature::nearest_distance: {
          double best = std::numeric_limits<double>::infinity();
          for (int j = 0; j < n; ++j) {
            if (j != i && valid[t][j]) best = std::min(best, (r[t][j].position - s.position).norm());
          }
          if (std::isfinite(best)) {
            out.value(t, i) = best;
            out.valid(t, i) = 1.0;
          }
          break;
        }
      }
    }
  }
  return out;
}

/// Validity [t][i] of a rollout: active agents at every step.
inline std::vector<std::vector<bool>> rollout_validity(const Scenario& sc) {
  const auto active = rl::active_agents(sc);
  return std::vector<std::vector<bool>>(static_cast<std::size_t>(sc.t_pred), active);
}

/// Validity [t][i] of the logged future.
inline std::vector<std::vector<bool>> gt_validity(const Scenario& sc) {
  std::vector<std::vector<bool>> v(static_cast<std::size_t>(sc.t_pred), std::vector<bool>(sc.agents.size()));
  for (int t = 0; t < sc.t_pred; ++t) {
    for (int i = 0; i < sc.num_agents(); ++i) v[t][i] = sc.agents[i].current().valid && sc.agents[i].future[t].valid;
  }
  return v;
}

inline std::vector<dynamics::KinematicState> initial_states(const Scenario& sc) {
  std::vector<dynamics::KinematicState> s;
  for (int i = 0; i < sc.num_agents(); ++i) s.push_back(dynamics::initial_state(sc, i));
  return s;
}

/// exp(mean log p(gt bin)) where p is the smoothed per-(t, i) histogram of the K samples.
inline double histogram_score(const std::vector<FeatureTable>& samples, const FeatureTable& gt,
                              const HistogramSpec& spec) {
  spec.validate("feature");
  if (samples.empty()) throw std::invalid_argument("histogram_score: no samples");
  double log_sum = 0.0, count = 0.0;
  std::vector<double> hist(static_cast<std::size_t>(spec.bins));
  for (Eigen::Index t = 0; t < gt.value.rows(); ++t) {
    for (Eigen::Index i = 0; i < gt.value.cols(); ++i) {
      if (gt.valid(t, i) == 0.0) continue;
      std::fill(hist.begin(), hist.end(), 0.0);
      double k = 0.0;
      for (const FeatureTable& s : samples) {
        if (s.valid(t, i) == 0.0) continue;
        hist[static_cast<std::size_t>(spec.bin(s.value(t, i)))] += 1.0;
        k += 1.0;
      }
      if (k == 0.0) continue;
      const double p = (hist[static_cast<std::size_t>(spec.bin(gt.value(t, i)))] + spec.smoothing) /
                       (k + spec.smoothing * spec.bins);
      log_sum += std::log(p);
      count += 1.0;
    }
  }
  if (count == 0.0) return 0.0;
  return std::exp(log_sum / count);
}

// ---------------------------------------------------------------------------
// Reports

struct MetricReport {
  double ade = 0.0;
  double min_ade = 0.0;
  double collision_rate = 0.0;
  double offroad_rate = 0.0;
  std::array<double, 4> likelihood{};  // indexed like kFeatures
  double composite = 0.0;
};

/// Component order: the four likelihood scores, then collision and offroad scores (1 - rate).
inline constexpr std::size_t kCompositeComponents = 6;

inline std::array<double, kCompositeComponents> composite_components(const MetricReport& r) {
  return {r.likelihood[0], r.likelihood[1], r.likelihood[2], r.likelihood[3], 1.0 - r.collision_rate,
          1.0 - r.offroad_rate};
}

inline double weighted_mean(const std::vector<double>& components, const std::vector<double>& weights) {
  if (components.size() != weights.size()) {
    throw std::invalid_argument("weighted_mean: " + std::to_string(weights.size()) + " weights for " +
                                std::to_string(components.size()) + " components");
  }
  double wsum = 0.0, acc = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] < 0.0) throw std::invalid_argument("composite: negative weight");
    wsum += weights[k];
    acc += weights[k] * components[k];
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw std::invalid_argument("composite: weights must sum to 1");
  return acc;
}

inline double composite(const MetricReport& r, const std::vector<double>& weights) {
  const auto c = composite_components(r);
  return weighted_mean(std::vector<double>(c.begin(), c.end()), weights);
}

struct EvalConfig {
  int rollouts = 32;
  double temperature = 1.0;
  double d_offroad = 0.0;
  HistogramConfig histograms;
  std::vector<double> composite_weights = std::vector<double>(kCompositeComponents, 1.0 / kCompositeComponents);

  void validate() const {
    if (rollouts < 1) throw ConfigError("evaluation: rollouts must be >= 1");
    if (temperature < 0.0) throw ConfigError("evaluation: temperature must be >= 0");
    for (Feature f : kFeatures) histograms.at(f).validate(to_string(f));
    if (composite_weights.size() != kCompositeComponents) {
      throw ConfigError("evaluation: composite_weights needs " + std::to_string(kCompositeComponents) + " entries");
    }
    double s = 0.0;
    for (double w : composite_weights) s += w;
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("evaluation: composite_weights must sum to 1");
  }
};

/// All metrics for one scenario from K rollouts.
inline MetricReport evaluate_scenario(const std::vector<Trajectory>& rollouts, const Scenario& sc,
                                      const EvalConfig& cfg) {
  MetricReport rep;
  const AdeResult a = ade(rollouts, sc);
  rep.ade = a.ade;
  rep.min_ade = a.min_ade;
  for (const Trajectory& r : rollouts) {
    const InteractionRates ir = interaction_rates(r, sc, cfg.d_offroad);
    rep.collision_rate += ir.collision_rate;
    rep.offroad_rate += ir.offroad_rate;
  }
  rep.collision_rate /= static_cast<double>(rollouts.size());
  rep.offroad_rate /= static_cast<double>(rollouts.size());

  const auto init = initial_states(sc);
  const auto rv = rollout_validity(sc);
  const auto gv = gt_validity(sc);
  const Trajectory gt = log_playback(sc);
  for (std::size_t k = 0; k < kFeatures.size(); ++k) {
    std::vector<FeatureTable> samples;
    for (const Trajectory& r : rollouts) samples.push_back(feature_table(r, init, rv, kFeatures[k], sc.dt));
    rep.likelihood[k] = histogram_score(samples, feature_table(gt, init, gv, kFeatures[k], sc.dt), cfg.histograms.at(kFeatures[k]));
  }
  rep.composite = composite(rep, cfg.composite_weights);
  return rep;
}

/// Unweighted mean over scenarios (summed in scenario order).
inline MetricReport mean_report(const std::vector<MetricReport>& rows, const EvalConfig& cfg) {
  if (rows.empty()) throw std::invalid_argument("mean_report: no scenarios");
  MetricReport m;
  for (const MetricReport& r : rows) {
    m.ade += r.ade;
    m.min_ade += r.min_ade;
    m.collision_rate += r.collision_rate;
    m.offroad_rate += r.offroad_rate;
    for (std::size_t k = 0; k < 4; ++k) m.likelihood[k] += r.likelihood[k];
  }
  const double n = static_cast<double>(rows.size());
  m.ade /= n;
  m.min_ade /= n;
  m.collision_rate /= n;
  m.offroad_rate /= n;
  for (double& l : m.likelihood) l /= n;
  m.composite = composite(m, cfg.composite_weights);
  return m;
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json lik;
  for (std::size_t k = 0; k < kFeatures.size(); ++k) lik[to_string(kFeatures[k])] = r.likelihood[k];
  return {{"ade", r.ade},
          {"min_ade", r.min_ade},
          {"collision_rate", r.collision_rate},
          {"offroad_rate", r.offroad_rate},
          {"likelihood", lik},
          {"composite", r.composite}};
}

inline std::string csv_header() {
  return "scenario,ade,min_ade,collision_rate,offroad_rate,linear_speed,linear_accel,angular_speed,nearest_distance,"
         "composite";
}

inline std::string csv_row(const std::string& id, const MetricReport& r) {
  auto f = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::string(buf);
  };
  std::string s = id;
  for (double v : {r.ade, r.min_ade, r.collision_rate, r.offroad_rate, r.likelihood[0], r.likelihood[1],
                   r.likelihood[2], r.likelihood[3], r.composite}) {
    s += "," + f(v);
  }
  return s;
}

}  // namespace simagent::eval
