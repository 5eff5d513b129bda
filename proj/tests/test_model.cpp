#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "simagent/dynamics.hpp"
#include "simagent/model/behavior_model.hpp"
#include "simagent/model/rollout.hpp"
#include "simagent/nn/optimizer.hpp"
#include "simagent/scenario.hpp"

using namespace simagent;
using model::BehaviorModel;
using model::ModelConfig;
using nn::Matrix;

namespace {

Scenario small_scenario(std::uint64_t seed, int agents = 4, int t_pred = 8) {
  GeneratorConfig g;
  g.num_agents = agents;
  g.t_pred = t_pred;
  return generate_scenario(seed, g);
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.hidden = 16;
  c.heads = 2;
  c.feed_forward = 32;
  c.max_steps = 20;
  return c;
}

/// A model whose head is not zero so that distributions are non-trivial.
BehaviorModel perturbed_model(std::uint64_t seed = 5) {
  BehaviorModel m(tiny_config());
  Rng rng(seed);
  model::randomize_parameters(m, "dec.head", 0.3, rng);
  return m;
}

}  // namespace

TEST(CausalMask, SingleStepIsAllTrue) {
  const auto m = model::build_causal_mask(1, 3);
  EXPECT_EQ(m.rows(), 3);
  EXPECT_TRUE(m.all());
}

TEST(CausalMask, TwoStepsTwoAgentsBlocks) {
  const auto m = model::build_causal_mask(2, 2);
  for (int q = 0; q < 4; ++q) {
    for (int k = 0; k < 4; ++k) EXPECT_EQ(m(q, k), !(q < 2 && k >= 2)) << q << "," << k;
  }
}

TEST(CausalMask, TrueCountMatchesClosedForm) {
  for (int t = 1; t <= 6; ++t) {
    for (int n = 1; n <= 5; ++n) EXPECT_EQ(model::build_causal_mask(t, n).count(), n * n * t * (t + 1) / 2);
  }
}

TEST(Encode, TokenCountAndDeterminism) {
  const Scenario sc = small_scenario(1);
  const BehaviorModel m(tiny_config());
  const auto a = m.encode(sc), b = m.encode(sc);
  int m_features = 0;
  for (const auto& f : sc.map) m_features += f.type != FeatureType::route;
  EXPECT_EQ(a.tokens.rows(), m_features + sc.num_agents());
  EXPECT_EQ(a.tokens.value(), b.tokens.value());
}

TEST(Encode, MapPermutationLeavesPredictionsUnchanged) {
  const Scenario sc = small_scenario(2);
  Scenario shuffled = sc;
  Rng rng(3);
  for (std::size_t k = shuffled.map.size(); k > 1; --k) std::swap(shuffled.map[k - 1], shuffled.map[rng.below(k)]);
  ASSERT_NE(shuffled.map, sc.map);
  const BehaviorModel m = perturbed_model();
  const auto gt = dynamics::infer_gt_actions(sc);
  EXPECT_EQ(m.token_log_probs(sc, gt).value(), m.token_log_probs(shuffled, gt).value());
}

TEST(Encode, NoValidAgentsIsAnError) {
  Scenario sc = small_scenario(4, 2);
  for (auto& a : sc.agents) a.history.back().valid = false;
  const BehaviorModel m(tiny_config());
  EXPECT_THROW(m.encode(sc), std::invalid_argument);
}

TEST(Decode, RowsSumToOne) {
  const Scenario sc = small_scenario(5);
  const BehaviorModel m = perturbed_model();
  BehaviorModel::Session s(m, sc);
  const Matrix lp = s.log_probs();
  ASSERT_EQ(lp.rows(), sc.num_agents());
  ASSERT_EQ(lp.cols(), 169);
  for (Eigen::Index r = 0; r < lp.rows(); ++r) EXPECT_NEAR(lp.row(r).array().exp().sum(), 1.0, 1e-12);
}

TEST(Decode, UntrainedSingleAgentIsUniform) {
  const Scenario sc = small_scenario(6, 1);
  const BehaviorModel m(tiny_config());
  BehaviorModel::Session s(m, sc);
  const Matrix lp = s.log_probs();
  const double entropy = -(lp.array().exp() * lp.array()).sum();
  EXPECT_NEAR(entropy, std::log(169.0), 1e-12);
}

TEST(Decode, FutureTokenDoesNotChangeCurrentLogits) {
  const Scenario sc = small_scenario(7);
  const BehaviorModel m = perturbed_model();
  auto tokens = dynamics::infer_gt_actions(sc);
  const Matrix base = m.token_log_probs(sc, tokens).value();
  const int n = sc.num_agents();
  const int t = 3;
  tokens[t][1] = (tokens[t][1] + 50) % 169;  // input to step t+1 onwards
  const Matrix changed = m.token_log_probs(sc, tokens).value();
  // log pi(token) rows for steps <= t use identical inputs; the changed target itself is at row t*n+1
  for (int r = 0; r < t * n; ++r) EXPECT_EQ(base(r, 0), changed(r, 0)) << r;
}

TEST(Decode, OtherAgentTokenChangesNextStep) {
  const Scenario sc = small_scenario(8);
  BehaviorModel m = perturbed_model();
  Rng rng(1);
  model::randomize_parameters(m, "dec.L", 0.3, rng);
  auto tokens = dynamics::infer_gt_actions(sc);
  const int n = sc.num_agents();
  const auto steps_a = model::teacher_forced_inputs(sc, tokens);
  tokens[2][0] = (tokens[2][0] + 30) % 169;
  const auto steps_b = model::teacher_forced_inputs(sc, tokens);
  const auto scene = m.encode(sc);
  const Matrix la = m.decode_logits(sc, scene, steps_a).value();
  const Matrix lb = m.decode_logits(sc, scene, steps_b).value();
  // agent 1 at step 3 sees agent 0's step-2 token
  EXPECT_GT((la.row(3 * n + 1) - lb.row(3 * n + 1)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(TeacherForced, UntrainedModelGivesLogVocab) {
  const Scenario sc = small_scenario(9);
  const BehaviorModel m(tiny_config());
  EXPECT_NEAR(m.teacher_forced_nll(sc, dynamics::infer_gt_actions(sc)).item(), std::log(169.0), 1e-12);
}

TEST(TeacherForced, InvalidAgentMatchesRemovingIt) {
  const Scenario sc = small_scenario(10);
  const BehaviorModel m = perturbed_model();
  Scenario masked = sc;
  for (auto& s : masked.agents[2].history) s.valid = false;
  Scenario removed = sc;
  removed.agents.erase(removed.agents.begin() + 2);
  const double a = m.teacher_forced_nll(masked, dynamics::infer_gt_actions(masked)).item();
  const double b = m.teacher_forced_nll(removed, dynamics::infer_gt_actions(removed)).item();
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(TeacherForced, OverfitsOneScenario) {
  const Scenario sc = small_scenario(11, 2, 6);
  BehaviorModel m(tiny_config());
  const auto gt = dynamics::infer_gt_actions(sc);
  nn::AdamConfig opt;
  opt.lr = 3e-3;
  double loss = 0.0;
  for (int it = 0; it < 600; ++it) {
    m.params().zero_grad();
    auto l = m.teacher_forced_nll(sc, gt);
    loss = l.item();
    if (loss < 0.1) break;
    l.backward();
    nn::adam_step(m.params(), opt);
  }
  EXPECT_LT(loss, 0.1);
}

TEST(Rollout, GreedyIsDeterministicAndReplaysThroughDynamics) {
  const Scenario sc = small_scenario(12);
  const BehaviorModel m = perturbed_model();
  Rng r1(1), r2(2);
  const auto a = model::sample_rollout(m, sc, 0.0, r1);
  const auto b = model::sample_rollout(m, sc, 0.0, r2);
  EXPECT_EQ(a.tokens, b.tokens);
  for (int i = 0; i < sc.num_agents(); ++i) {
    auto s = dynamics::initial_state(sc, i);
    for (int t = 0; t < a.steps(); ++t) {
      s = dynamics::step(s, dynamics::decode_action(a.tokens[t][i]), sc.dt);
      EXPECT_EQ(s.position, a.states[t][i].position);
    }
  }
}

TEST(Rollout, LogProbBookkeepingMatchesTeacherForced) {
  const Scenario sc = small_scenario(13, 5, 10);
  BehaviorModel m = perturbed_model();
  Rng init(4);
  model::randomize_parameters(m, "dec.L", 0.2, init);
  Rng rng(7);
  const auto r = model::sample_rollout(m, sc, 1.0, rng);
  double recorded = 0.0;
  for (const auto& row : r.log_probs) {
    for (double v : row) recorded += v;
  }
  const double reeval = m.token_log_probs(sc, r.tokens).value().sum();
  EXPECT_NEAR(recorded, reeval, 1e-8);
  const double mean = recorded / (r.steps() * r.num_agents());
  EXPECT_GT(std::exp(mean), 0.0);
  EXPECT_LE(std::exp(mean), 1.0);
}

TEST(Rollout, TruncatedRedecodeReproducesStepDistributions) {
  const Scenario sc = small_scenario(14, 3, 8);
  BehaviorModel m = perturbed_model();
  Rng rng(8);
  BehaviorModel::Session s(m, sc);
  std::vector<std::vector<int>> tokens;
  for (int t = 0; t < sc.t_pred; ++t) {
    const Matrix lp = s.log_probs();
    // truncated teacher-forced decode over the first t+1 steps
    std::vector<std::vector<int>> prefix = tokens;
    prefix.push_back(std::vector<int>(static_cast<std::size_t>(sc.num_agents()), 0));
    const auto scene = m.encode(sc);
    const Matrix full = nn::log_softmax(m.decode_logits(sc, scene, model::teacher_forced_inputs(sc, prefix))).value();
    const Matrix last = full.bottomRows(sc.num_agents());
    EXPECT_LE((last - lp).cwiseAbs().maxCoeff(), 1e-10) << "step " << t;
    std::vector<int> tok;
    std::vector<dynamics::KinematicState> next;
    for (int i = 0; i < sc.num_agents(); ++i) {
      tok.push_back(model::sample_token(lp.row(i), 1.0, rng));
      next.push_back(dynamics::step(s.states()[i], dynamics::decode_action(tok.back()), sc.dt));
    }
    s.commit(tok, next);
    tokens.push_back(tok);
  }
}

TEST(Rollout, SampleTokenFollowsDistribution) {
  Eigen::RowVectorXd lp(3);
  lp << std::log(0.2), std::log(0.5), std::log(0.3);
  Rng rng(9);
  std::array<int, 3> counts{};
  for (int k = 0; k < 20000; ++k) counts[model::sample_token(lp, 1.0, rng)]++;
  EXPECT_NEAR(counts[1] / 20000.0, 0.5, 0.02);
  EXPECT_NEAR(counts[0] / 20000.0, 0.2, 0.02);
  EXPECT_EQ(model::sample_token(lp, 0.0, rng), 1);
}
