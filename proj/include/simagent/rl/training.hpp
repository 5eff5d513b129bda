#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "simagent/dynamics.hpp"
#include "simagent/model/behavior_model.hpp"
#include "simagent/model/rollout.hpp"
#include "simagent/nn/optimizer.hpp"
#include "simagent/rl/reinforce.hpp"
#include "simagent/rng.hpp"

namespace simagent::rl {

struct OptimizerConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping

  nn::AdamConfig adam() const {
    nn::AdamConfig a;
    a.lr = lr;
    a.beta1 = beta1;
    a.beta2 = beta2;
    a.eps = eps;
    if (clip_norm > 0.0) a.clip_norm = clip_norm;
    return a;
  }
};

struct PretrainConfig {
  int iters = 5000;
  int batch = 1;
  OptimizerConfig optimizer;
  /// Stop once the mean training NLL over the last log interval falls below this (0 disables).
  double stop_nll = 0.0;
  int log_every = 100;
};

struct FinetuneConfig {
  int iters = 200;
  int batch = 16;
  OptimizerConfig optimizer{5e-6};  // full-scale value; desk-scale runs raise it
  double temperature = 1.0;
  RewardConfig reward;
  int log_every = 10;
  int checkpoint_every = 50;
};

struct PretrainLogEntry {
  int iter = 0;
  double nll = 0.0;
};

struct FinetuneLogEntry {
  int iter = 0;
  double loss = 0.0;
  double mean_reward = 0.0;
  double collision_rate = 0.0;
  double ade = 0.0;
};

inline void to_json(nlohmann::json& j, const PretrainLogEntry& e) { j = {{"iter", e.iter}, {"nll", e.nll}}; }
inline void to_json(nlohmann::json& j, const FinetuneLogEntry& e) {
  j = {{"iter", e.iter}, {"loss", e.loss}, {"mean_reward", e.mean_reward}, {"collision_rate", e.collision_rate},
       {"ade", e.ade}};
}

/// Thrown when fine-tuning hits a non-finite value; the model holds the last good parameters.
class TrainingAborted : public std::runtime_error {
public:
  TrainingAborted(const std::string& what, int iter) : std::runtime_error(what), iter(iter) {}
  int iter;
};

/// Behavior cloning with teacher forcing. Returns one entry per log interval.
inline std::vector<PretrainLogEntry> pretrain(model::BehaviorModel& m, const std::vector<Scenario>& data,
                                              const PretrainConfig& cfg, std::uint64_t seed,
                                              const std::function<void(const PretrainLogEntry&)>& on_log = {}) {
  if (data.empty()) throw std::invalid_argument("pretrain: empty scenario set");
  if (cfg.batch < 1 || cfg.log_every < 1) throw std::invalid_argument("pretrain: batch and log_every must be >= 1");
  std::vector<std::vector<std::vector<int>>> targets;
  for (const Scenario& sc : data) targets.push_back(dynamics::infer_gt_actions(sc));
  Rng rng(stream_seed(seed, 0x7072));
  const nn::AdamConfig adam = cfg.optimizer.adam();
  std::vector<PretrainLogEntry> log;
  double window = 0.0;
  int window_n = 0;
  for (int it = 1; it <= cfg.iters; ++it) {
    m.params().zero_grad();
    double batch_loss = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      const std::size_t k = rng.below(data.size());
      nn::Tensor l = nn::scale(m.teacher_forced_nll(data[k], targets[k]), 1.0 / cfg.batch);
      batch_loss += l.item();
      l.backward();
    }
    nn::adam_step(m.params(), adam);
    window += batch_loss;
    ++window_n;
    if (it % cfg.log_every == 0 || it == cfg.iters) {
      PretrainLogEntry e{it, window / window_n};
      log.push_back(e);
      if (on_log) on_log(e);
      window = 0.0;
      window_n = 0;
      if (cfg.stop_nll > 0.0 && e.nll < cfg.stop_nll) break;
    }
  }
  return log;
}

/// Mean teacher-forced NLL over a scenario set (no gradient).
inline double evaluate_nll(const model::BehaviorModel& m, const std::vector<Scenario>& data) {
  nn::NoGradGuard guard;
  double total = 0.0;
  for (const Scenario& sc : data) total += m.teacher_forced_nll(sc, dynamics::infer_gt_actions(sc)).item();
  return total / static_cast<double>(data.size());
}

struct RolloutStats {
  double mean_reward = 0.0;
  double collision_rate = 0.0;  // fraction of active agents with at least one overlap step
  double ade = 0.0;
};

/// One REINFORCE update from a batch of closed-loop rollouts.
struct ReinforceStep {
  double loss = 0.0;
  RolloutStats stats;
};

inline ReinforceStep reinforce_update(model::BehaviorModel& m, const std::vector<const Scenario*>& batch,
                                      const FinetuneConfig& cfg, const std::vector<std::uint64_t>& rollout_seeds) {
  std::vector<model::Rollout> rollouts;
  std::vector<Matrix> returns, valid;
  double reward_sum = 0.0, valid_sum = 0.0, disp_sum = 0.0, gt_sum = 0.0, coll_agents = 0.0, agents = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    Rng rng(rollout_seeds[b]);
    rollouts.push_back(model::sample_rollout(m, *batch[b], cfg.temperature, rng));
    const StepRewards r = compute_rewards(rollouts.back().states, *batch[b], cfg.reward);
    returns.push_back(compute_returns(r.reward, cfg.reward.gamma));
    valid.push_back(r.valid);
    reward_sum += r.reward.cwiseProduct(r.valid).sum();
    valid_sum += r.valid.sum();
    disp_sum += r.displacement.cwiseProduct(r.gt_valid).sum();
    gt_sum += r.gt_valid.sum();
    for (Eigen::Index i = 0; i < r.valid.cols(); ++i) {
      if (r.valid.col(i).sum() == 0.0) continue;
      agents += 1.0;
      coll_agents += r.collision.col(i).maxCoeff() > 0.0 ? 1.0 : 0.0;
    }
  }
  const std::vector<Matrix> norm = normalize_returns(returns, valid);
  m.params().zero_grad();
  double loss = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    nn::Tensor lp = m.token_log_probs(*batch[b], rollouts[b].tokens);
    nn::Tensor term = reinforce_term(lp, norm[b], valid[b], valid_sum);
    loss += term.item();
    term.backward();
  }
  if (!std::isfinite(loss)) throw nn::NumericError("non-finite REINFORCE loss");
  nn::adam_step(m.params(), cfg.optimizer.adam());
  ReinforceStep out;
  out.loss = loss;
  out.stats.mean_reward = reward_sum / valid_sum;
  out.stats.collision_rate = agents > 0 ? coll_agents / agents : 0.0;
  out.stats.ade = gt_sum > 0 ? disp_sum / gt_sum : 0.0;
  return out;
}

/// Closed-loop fine-tuning. `on_checkpoint(iter)` is called every checkpoint_every iterations.
/// Adam moments are reset first, so fine-tuning does not inherit pretraining's optimizer state.
/// On a non-finite value the parameters of the last completed iteration are kept and TrainingAborted is thrown.
inline std::vector<FinetuneLogEntry> finetune(model::BehaviorModel& m, const std::vector<Scenario>& data,
                                              const FinetuneConfig& cfg, std::uint64_t seed,
                                              const std::function<void(const FinetuneLogEntry&)>& on_log = {},
                                              const std::function<void(int)>& on_checkpoint = {}) {
  cfg.reward.validate();
  if (cfg.iters == 0) return {};
  if (data.empty()) throw std::invalid_argument("finetune: empty scenario set");
  if (cfg.batch < 1 || cfg.log_every < 1) throw std::invalid_argument("finetune: batch and log_every must be >= 1");
  m.params().reset_optimizer_state();
  Rng rng(stream_seed(seed, 0x6674));
  std::vector<FinetuneLogEntry> log;
  FinetuneLogEntry acc;
  int acc_n = 0;
  for (int it = 1; it <= cfg.iters; ++it) {
    std::vector<const Scenario*> batch;
    std::vector<std::uint64_t> seeds;
    for (int b = 0; b < cfg.batch; ++b) {
      batch.push_back(&data[rng.below(data.size())]);
      seeds.push_back(stream_seed(seed, static_cast<std::uint64_t>(it) * 1000003ULL + static_cast<std::uint64_t>(b)));
    }
    // Parameters are only written by adam_step, after every check has passed.
    const nn::ParameterStore snapshot = m.params().clone();
    ReinforceStep step;
    try {
      step = reinforce_update(m, batch, cfg, seeds);
    } catch (const nn::NumericError& e) {
      for (std::size_t k = 0; k < snapshot.size(); ++k) {
        m.params().entries()[k].tensor.mutable_value() = snapshot.entries()[k].tensor.value();
        m.params().entries()[k].m = snapshot.entries()[k].m;
        m.params().entries()[k].v = snapshot.entries()[k].v;
      }
      m.params().step = snapshot.step;
      m.params().zero_grad();
      throw TrainingAborted(std::string("fine-tuning aborted at iteration ") + std::to_string(it) + ": " + e.what(), it);
    }
    acc.loss += step.loss;
    acc.mean_reward += step.stats.mean_reward;
    acc.collision_rate += step.stats.collision_rate;
    acc.ade += step.stats.ade;
    ++acc_n;
    if (it % cfg.log_every == 0 || it == cfg.iters) {
      FinetuneLogEntry e{it, acc.loss / acc_n, acc.mean_reward / acc_n, acc.collision_rate / acc_n, acc.ade / acc_n};
      log.push_back(e);
      if (on_log) on_log(e);
      acc = {};
      acc_n = 0;
    }
    if (on_checkpoint && cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) on_checkpoint(it);
  }
  return log;
}

}  // namespace simagent::rl
