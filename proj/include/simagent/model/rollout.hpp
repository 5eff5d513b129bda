#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "simagent/dynamics.hpp"
#include "simagent/model/behavior_model.hpp"
#include "simagent/rng.hpp"

namespace simagent::model {

/// Indexed [t][i] for prediction steps 1..T.
struct Rollout {
  std::vector<std::vector<int>> tokens;
  std::vector<std::vector<double>> log_probs;  // log pi of the sampled token at temperature 1
  std::vector<std::vector<dynamics::KinematicState>> states;

  int steps() const { return static_cast<int>(tokens.size()); }
  int num_agents() const { return tokens.empty() ? 0 : static_cast<int>(tokens[0].size()); }
};

/// Draws from softmax(log_probs / temperature); temperature 0 is argmax with ties to the lowest index.
template <class Row>
int sample_token(const Row& log_probs, double temperature, Rng& rng) {
  const Eigen::Index v = log_probs.size();
  if (temperature <= 0.0) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < v; ++k) {
      if (log_probs(k) > log_probs(best)) best = k;
    }
    return static_cast<int>(best);
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < v; ++k) mx = std::max(mx, log_probs(k) / temperature);
  std::vector<double> w(static_cast<std::size_t>(v));
  double total = 0.0;
  for (Eigen::Index k = 0; k < v; ++k) {
    w[k] = std::exp(log_probs(k) / temperature - mx);
    total += w[k];
  }
  const double u = rng.uniform() * total;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < v; ++k) {
    acc += w[k];
    if (u < acc) return static_cast<int>(k);
  }
  return static_cast<int>(v - 1);
}

/// Autoregressive rollout of every agent over the scenario's prediction horizon.
inline Rollout sample_rollout(const BehaviorModel& model, const Scenario& sc, double temperature, Rng& rng) {
  BehaviorModel::Session session(model, sc);
  const int n = sc.num_agents();
  Rollout out;
  for (int t = 0; t < sc.t_pred; ++t) {
    const Matrix lp = session.log_probs();
    std::vector<int> tokens(static_cast<std::size_t>(n));
    std::vector<double> logp(static_cast<std::size_t>(n));
    std::vector<dynamics::KinematicState> next(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      tokens[i] = sample_token(lp.row(i), temperature, rng);
      logp[i] = lp(i, tokens[i]);
      next[i] = dynamics::step(session.states()[i], dynamics::decode_action(tokens[i]), sc.dt);
    }
    session.commit(tokens, next);
    out.tokens.push_back(std::move(tokens));
    out.log_probs.push_back(std::move(logp));
    out.states.push_back(std::move(next));
  }
  return out;
}

}  // namespace simagent::model
