#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "simagent/dynamics.hpp"
#include "simagent/geometry.hpp"
#include "simagent/nn/tensor.hpp"
#include "simagent/scenario.hpp"

namespace simagent::rl {

using nn::Matrix;

struct RewardConfig {
  double lambda_collision = 2.0;
  double gamma = 0.95;

  void validate() const {
    if (!(lambda_collision >= 0.0)) throw std::invalid_argument("reward: lambda_collision must be >= 0");
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("reward: gamma must be in (0, 1)");
  }
};

/// Boolean [t][i] table, stored as 0/1 doubles for direct use in statistics.
using StepTable = Matrix;

/// Agents that take part in rewards, statistics and collision checks: valid at the current step.
inline std::vector<bool> active_agents(const Scenario& sc) {
  std::vector<bool> a(static_cast<std::size_t>(sc.num_agents()));
  for (int i = 0; i < sc.num_agents(); ++i) a[i] = sc.agents[i].current().valid;
  return a;
}

/// Coll[t][i] = 1 iff agent i's box overlaps another active agent's box at step t.
inline StepTable collision_table(const std::vector<std::vector<dynamics::KinematicState>>& states, const Scenario& sc) {
  const int t_steps = static_cast<int>(states.size());
  const int n = sc.num_agents();
  const auto active = active_agents(sc);
  StepTable coll = StepTable::Zero(t_steps, n);
  std::vector<geometry::OrientedBox> boxes(static_cast<std::size_t>(n));
  for (int t = 0; t < t_steps; ++t) {
    for (int i = 0; i < n; ++i) boxes[i] = sc.box(i, states[t][i].position, states[t][i].heading);
    for (int i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (int j = i + 1; j < n; ++j) {
        if (active[j] && geometry::boxes_overlap(boxes[i], boxes[j])) {
          coll(t, i) = 1.0;
          coll(t, j) = 1.0;
        }
      }
    }
  }
  return coll;
}

struct StepRewards {
  Matrix reward;       // T x N
  Matrix valid;        // T x N, 1 where the entry enters statistics
  StepTable collision; // T x N
  Matrix displacement; // T x N, meaningful where gt_valid
  Matrix gt_valid;     // T x N
};

/// r = -|Pos - GT| - lambda * Coll. Steps with invalid GT keep only the collision term.
inline StepRewards compute_rewards(const std::vector<std::vector<dynamics::KinematicState>>& states,
                                   const Scenario& sc, const RewardConfig& cfg) {
  cfg.validate();
  const int t_steps = static_cast<int>(states.size());
  const int n = sc.num_agents();
  if (t_steps > sc.t_pred) throw std::invalid_argument("compute_rewards: rollout longer than the scenario horizon");
  const auto active = active_agents(sc);
  StepRewards out;
  out.collision = collision_table(states, sc);
  out.reward = Matrix::Zero(t_steps, n);
  out.valid = Matrix::Zero(t_steps, n);
  out.displacement = Matrix::Zero(t_steps, n);
  out.gt_valid = Matrix::Zero(t_steps, n);
  for (int t = 0; t < t_steps; ++t) {
    for (int i = 0; i < n; ++i) {
      if (!active[i]) continue;
      out.valid(t, i) = 1.0;
      const FuturePoint& gt = sc.agents[i].future[t];
      double r = -cfg.lambda_collision * out.collision(t, i);
      if (gt.valid) {
        out.gt_valid(t, i) = 1.0;
        out.displacement(t, i) = (states[t][i].position - gt.position).norm();
        r -= out.displacement(t, i);
      }
      out.reward(t, i) = r;
    }
  }
  return out;
}

/// R_t = r_t + gamma R_{t+1}, per column.
inline Matrix compute_returns(const Matrix& rewards, double gamma) {
  Matrix r(rewards.rows(), rewards.cols());
  for (Eigen::Index i = 0; i < rewards.cols(); ++i) {
    double acc = 0.0;
    for (Eigen::Index t = rewards.rows() - 1; t >= 0; --t) {
      acc = rewards(t, i) + gamma * acc;
      r(t, i) = acc;
    }
  }
  return r;
}

inline constexpr double kNormalizeEps = 1e-8;

/// (R - mean) / max(std, eps) over all valid entries of the batch; population std. Invalid entries become 0.
inline std::vector<Matrix> normalize_returns(const std::vector<Matrix>& returns, const std::vector<Matrix>& valid) {
  if (returns.size() != valid.size()) throw std::invalid_argument("normalize_returns: returns/valid size mismatch");
  double count = 0.0, sum = 0.0;
  for (std::size_t b = 0; b < returns.size(); ++b) {
    if (returns[b].rows() != valid[b].rows() || returns[b].cols() != valid[b].cols()) {
      throw std::invalid_argument("normalize_returns: shape mismatch in batch entry " + std::to_string(b));
    }
    count += valid[b].sum();
    sum += returns[b].cwiseProduct(valid[b]).sum();
  }
  if (count < 2.0) throw std::invalid_argument("normalize_returns: needs at least 2 valid entries");
  const double mean = sum / count;
  double sq = 0.0;
  for (std::size_t b = 0; b < returns.size(); ++b) {
    sq += ((returns[b].array() - mean).square() * valid[b].array()).sum();
  }
  const double sd = std::max(std::sqrt(sq / count), kNormalizeEps);
  std::vector<Matrix> out;
  for (std::size_t b = 0; b < returns.size(); ++b) {
    out.push_back(((returns[b].array() - mean) / sd * valid[b].array()).matrix());
  }
  return out;
}

/// Flattens a T x N table into the step-major column layout used by the model.
inline Matrix step_major(const Matrix& m) {
  Matrix c(m.size(), 1);
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    for (Eigen::Index i = 0; i < m.cols(); ++i) c(t * m.cols() + i, 0) = m(t, i);
  }
  return c;
}

/// Sum over valid entries of -log_prob * R_norm, divided by `denominator`. The returns are constants.
inline nn::Tensor reinforce_term(const nn::Tensor& log_probs, const Matrix& normalized, const Matrix& valid,
                                 double denominator) {
  const Matrix w = step_major(normalized.cwiseProduct(valid)) * (-1.0 / denominator);
  return nn::weighted_sum(log_probs, w);
}

/// -mean over valid entries of log_prob * R_norm.
inline nn::Tensor reinforce_loss(const nn::Tensor& log_probs, const Matrix& normalized, const Matrix& valid) {
  const double count = valid.sum();
  if (count == 0.0) throw std::invalid_argument("reinforce_loss: empty mask");
  return reinforce_term(log_probs, normalized, valid, count);
}

}  // namespace simagent::rl
