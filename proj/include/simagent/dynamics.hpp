#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "simagent/scenario.hpp"
#include "simagent/types.hpp"

namespace simagent::dynamics {

/// Uniform grid of 2-D acceleration bin centers; tokens are row-major (iy * bins + ix).
struct ActionGrid {
  int bins_per_axis = 13;
  double a_min = -6.0;
  double a_max = 6.0;

  int vocab_size() const { return bins_per_axis * bins_per_axis; }
  double spacing() const { return (a_max - a_min) / (bins_per_axis - 1); }
  double center(int idx) const { return a_min + spacing() * idx; }

  /// Nearest bin after clipping; exact midpoints go to the lower index.
  int snap(double a) const {
    const double clipped = std::clamp(a, a_min, a_max);
    const double x = (clipped - a_min) / spacing();
    const int idx = static_cast<int>(std::ceil(x - 0.5));
    return std::clamp(idx, 0, bins_per_axis - 1);
  }
};

/// Token index, or kMaskedToken where the target is unavailable.
using ActionToken = int;
inline constexpr ActionToken kMaskedToken = -1;

inline ActionToken encode_action(Vec2 accel, const ActionGrid& grid = {}) {
  if (!std::isfinite(accel.x) || !std::isfinite(accel.y)) {
    throw std::invalid_argument("encode_action: non-finite acceleration");
  }
  return grid.snap(accel.y) * grid.bins_per_axis + grid.snap(accel.x);
}

inline Vec2 decode_action(ActionToken token, const ActionGrid& grid = {}) {
  if (token < 0 || token >= grid.vocab_size()) {
    throw std::out_of_range("decode_action: token " + std::to_string(token) + " outside [0, " +
                            std::to_string(grid.vocab_size() - 1) + "]");
  }
  return {grid.center(token % grid.bins_per_axis), grid.center(token / grid.bins_per_axis)};
}

/// Heading follows velocity above this speed and is held below it.
inline constexpr double kHeadingMinSpeed = 0.1;

struct KinematicState {
  Vec2 position;
  Vec2 velocity;
  double heading = 0.0;
};

/// pos' = (a*dt + vel)*dt + pos, vel' = vel + a*dt.
inline KinematicState step(const KinematicState& s, Vec2 accel, double dt) {
  KinematicState next;
  next.velocity = s.velocity + accel * dt;
  next.position = next.velocity * dt + s.position;
  next.heading = next.velocity.norm() >= kHeadingMinSpeed ? std::atan2(next.velocity.y, next.velocity.x) : s.heading;
  return next;
}

/// Target tokens for one agent given its positions p_{-1}, p_0, p_1 .. p_T.
///
/// Each target is the acceleration that carries the *reconstructed* state to
/// the next logged position, so quantization error does not accumulate over
/// the horizon. `valid[k]` flags positions[k].
inline std::vector<ActionToken> infer_actions_from_positions(const std::vector<Vec2>& positions,
                                                             const std::vector<bool>& valid, double dt,
                                                             const ActionGrid& grid = {}) {
  if (positions.size() < 2 || positions.size() != valid.size()) {
    throw std::invalid_argument("infer_actions_from_positions: need p_{-1}, p_0 and matching validity");
  }
  const std::size_t horizon = positions.size() - 2;
  std::vector<ActionToken> tokens(horizon, kMaskedToken);
  bool have_state = valid[0] && valid[1];
  KinematicState recon{positions[1], (positions[1] - positions[0]) / dt, 0.0};
  for (std::size_t t = 0; t < horizon; ++t) {
    const std::size_t k = t + 2;
    if (!valid[k]) {
      have_state = false;
      continue;
    }
    if (!have_state) {
      // Re-anchor on the log once two consecutive valid positions exist again.
      if (valid[k - 1]) {
        recon = {positions[k], (positions[k] - positions[k - 1]) / dt, 0.0};
        have_state = true;
      }
      continue;
    }
    const Vec2 accel = (positions[k] - recon.position - recon.velocity * dt) / (dt * dt);
    tokens[t] = encode_action(accel, grid);
    recon = step(recon, decode_action(tokens[t], grid), dt);
  }
  return tokens;
}

/// Target tokens indexed [t][agent] for steps 1..t_pred; invalid steps hold kMaskedToken.
inline std::vector<std::vector<ActionToken>> infer_gt_actions(const Scenario& sc, const ActionGrid& grid = {}) {
  std::vector<std::vector<ActionToken>> out(sc.t_pred, std::vector<ActionToken>(sc.num_agents(), kMaskedToken));
  std::vector<Vec2> pos;
  std::vector<bool> valid;
  for (int i = 0; i < sc.num_agents(); ++i) {
    anchored_positions(sc, i, pos, valid);
    const auto tokens = infer_actions_from_positions(pos, valid, sc.dt, grid);
    for (int t = 0; t < sc.t_pred; ++t) out[t][i] = tokens[t];
  }
  return out;
}

/// State at step 0 as used to start a rollout: velocity is the backward difference of the log.
inline KinematicState initial_state(const Scenario& sc, int i) {
  const Agent& a = sc.agents[i];
  const AgentState& cur = a.current();
  const AgentState& prev = a.history[a.history.size() - 2];
  KinematicState s;
  s.position = cur.position;
  s.velocity = prev.valid ? (cur.position - prev.position) / sc.dt : cur.velocity;
  s.heading = cur.heading;
  return s;
}

}  // namespace simagent::dynamics
