#include <algorithm>
#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "simagent/eval/evaluate.hpp"
#include "simagent/eval/metrics.hpp"
#include "simagent/scenario.hpp"

using namespace simagent;
using dynamics::KinematicState;
using eval::FeatureTable;
using eval::Trajectory;
using nn::Matrix;

namespace {

constexpr double kHalfWidth = 5.0;

/// Straight corridor along +x with edges at y = +-kHalfWidth; agents drive at 10 m/s in +x.
Scenario corridor(int agents, int t_pred = 5) {
  Scenario sc;
  sc.id = "corridor";
  sc.t_prev = 1;
  sc.t_pred = t_pred;
  sc.map.push_back({{{-50, -kHalfWidth}, {150, -kHalfWidth}}, FeatureType::road_edge});
  sc.map.push_back({{{150, kHalfWidth}, {-50, kHalfWidth}}, FeatureType::road_edge});
  for (int i = 0; i < agents; ++i) {
    Agent a;
    const Vec2 p0{10.0 * i, 0.0};
    a.history = {{p0 - Vec2{1, 0}, {10, 0}, 0.0}, {p0, {10, 0}, 0.0}};
    for (int t = 1; t <= t_pred; ++t) a.future.push_back({p0 + Vec2{1.0 * t, 0.0}, true});
    sc.agents.push_back(a);
  }
  sc.validate();
  return sc;
}

Trajectory shifted(const Trajectory& r, Vec2 d) {
  Trajectory out = r;
  for (auto& step : out) {
    for (auto& s : step) s.position = s.position + d;
  }
  return out;
}

FeatureTable single_cell(double v) {
  return {Matrix::Constant(1, 1, v), Matrix::Ones(1, 1)};
}

}  // namespace

TEST(Ade, GroundTruthIsZero) {
  const Scenario sc = corridor(3);
  const auto a = eval::ade({eval::log_playback(sc)}, sc);
  EXPECT_EQ(a.ade, 0.0);
  EXPECT_EQ(a.min_ade, 0.0);
}

TEST(Ade, ConstantOffsetThreeFourFive) {
  const Scenario sc = corridor(3);
  const auto a = eval::ade({shifted(eval::log_playback(sc), {3, 4})}, sc);
  EXPECT_DOUBLE_EQ(a.ade, 5.0);
  EXPECT_DOUBLE_EQ(a.min_ade, 5.0);
}

TEST(Ade, PerfectAndOffsetPair) {
  const Scenario sc = corridor(2);
  const Trajectory gt = eval::log_playback(sc);
  const auto a = eval::ade({gt, shifted(gt, {3, 4})}, sc);
  EXPECT_DOUBLE_EQ(a.ade, 2.5);
  EXPECT_DOUBLE_EQ(a.min_ade, 0.0);
}

TEST(Ade, NoValidEntriesThrows) {
  Scenario sc = corridor(1);
  for (auto& f : sc.agents[0].future) f.valid = false;
  EXPECT_THROW(eval::ade({eval::log_playback(sc)}, sc), std::invalid_argument);
}

TEST(InteractionRates, NonConflictGtReplayHasNoCollisions) {
  GeneratorConfig g;
  g.num_agents = 6;
  g.t_pred = 20;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Scenario sc = generate_scenario(seed, g);
    const auto r = eval::interaction_rates(eval::log_playback(sc), sc);
    EXPECT_EQ(r.collision_rate, 0.0) << seed;
    EXPECT_EQ(r.offroad_rate, 0.0) << seed;
  }
}

TEST(InteractionRates, SharedPointCountsBothAgents) {
  const Scenario sc = corridor(3);
  Trajectory r = eval::log_playback(sc);
  r[2][1].position = r[2][0].position;
  EXPECT_DOUBLE_EQ(eval::interaction_rates(r, sc).collision_rate, 2.0 / 3.0);
}

TEST(InteractionRates, OffroadOnStraightCorridor) {
  const Scenario sc = corridor(2);
  Trajectory r = eval::log_playback(sc);
  for (auto& step : r) step[1].position.y = kHalfWidth + 1.0;
  for (auto& step : r) step[0].position.y = 0.0;
  const auto rates = eval::interaction_rates(r, sc);
  EXPECT_DOUBLE_EQ(rates.offroad_rate, 0.5);
  // only agent 1 crossed
  Trajectory only0 = r;
  for (auto& step : only0) step[1].position.y = 0.0;
  EXPECT_EQ(eval::interaction_rates(only0, sc).offroad_rate, 0.0);
}

TEST(InteractionRates, NoRoadEdgesMeansNoOffroad) {
  Scenario sc = corridor(2);
  sc.map.clear();
  Trajectory r = eval::log_playback(sc);
  r[0][0].position.y = 100.0;
  EXPECT_EQ(eval::interaction_rates(r, sc).offroad_rate, 0.0);
}

TEST(Histogram, IdenticalSamplesGiveMaximalScore) {
  const eval::HistogramSpec spec{0.0, 30.0};
  const int k = 4;
  const std::vector<FeatureTable> samples(k, single_cell(12.3));
  const double best = (k + spec.smoothing) / (k + spec.smoothing * spec.bins);
  EXPECT_DOUBLE_EQ(eval::histogram_score(samples, single_cell(12.3), spec), best);
  EXPECT_LT(eval::histogram_score(samples, single_cell(20.0), spec), best);
}

TEST(Histogram, UniformSamplesScoreBinWidthOverRange) {
  const eval::HistogramSpec spec{0.0, 30.0};
  Rng rng(1);
  const int cells = 40, k = 3200;
  std::vector<FeatureTable> samples(k, FeatureTable{Matrix::Zero(1, cells), Matrix::Ones(1, cells)});
  for (auto& s : samples) {
    for (int c = 0; c < cells; ++c) s.value(0, c) = rng.uniform(0.0, 30.0);
  }
  FeatureTable gt{Matrix::Zero(1, cells), Matrix::Ones(1, cells)};
  for (int c = 0; c < cells; ++c) gt.value(0, c) = rng.uniform(0.0, 30.0);
  EXPECT_NEAR(eval::histogram_score(samples, gt, spec), 1.0 / 32.0, 0.1 / 32.0);
}

TEST(Histogram, ScoreFallsAsSamplesShiftAway) {
  const eval::HistogramSpec spec{0.0, 30.0};
  const int k = 200, cells = 25;
  FeatureTable gt{Matrix::Zero(1, cells), Matrix::Ones(1, cells)};
  for (int c = 0; c < cells; ++c) gt.value(0, c) = 10.0 + 0.37 * c;
  double prev = 2.0;
  for (double shift = 0.0; shift <= 8.0; shift += 0.5) {
    std::vector<FeatureTable> samples;
    for (int j = 0; j < k; ++j) {
      // evenly spaced quantiles of a triangular density on [-3, 3]
      const double u = (j + 0.5) / k;
      const double q = u < 0.5 ? -3.0 + 3.0 * std::sqrt(2.0 * u) : 3.0 - 3.0 * std::sqrt(2.0 * (1.0 - u));
      FeatureTable s = gt;
      s.value.array() += shift + q;
      samples.push_back(s);
    }
    const double score = eval::histogram_score(samples, gt, spec);
    EXPECT_LE(score, prev) << "shift " << shift;
    prev = score;
  }
}

TEST(Histogram, InvariantUnderSamplePermutation) {
  const eval::HistogramSpec spec{-10.0, 10.0};
  Rng rng(2);
  std::vector<FeatureTable> samples;
  for (int j = 0; j < 16; ++j) samples.push_back({Matrix::Random(3, 4) * 8.0, Matrix::Ones(3, 4)});
  const FeatureTable gt{Matrix::Random(3, 4) * 8.0, Matrix::Ones(3, 4)};
  const double base = eval::histogram_score(samples, gt, spec);
  std::reverse(samples.begin(), samples.end());
  std::swap(samples[2], samples[9]);
  EXPECT_EQ(eval::histogram_score(samples, gt, spec), base);
}

TEST(Histogram, EmptyBinsConfigRejected) {
  eval::HistogramSpec spec{0.0, 1.0};
  spec.bins = 0;
  EXPECT_THROW(eval::histogram_score({single_cell(0.5)}, single_cell(0.5), spec), ConfigError);
}

TEST(Features, ConstantTurnGivesAngularSpeed) {
  Scenario sc = corridor(1, 3);
  Trajectory r = eval::log_playback(sc);
  for (int t = 0; t < 3; ++t) r[t][0].heading = 0.05 * (t + 1);
  const auto init = eval::initial_states(sc);
  const auto valid = eval::rollout_validity(sc);
  const FeatureTable ang = eval::feature_table(r, init, valid, eval::Feature::angular_speed, sc.dt);
  for (int t = 0; t < 3; ++t) EXPECT_NEAR(ang.value(t, 0), 0.5, 1e-12);
  const FeatureTable acc = eval::feature_table(r, init, valid, eval::Feature::linear_accel, sc.dt);
  for (int t = 0; t < 3; ++t) EXPECT_NEAR(acc.value(t, 0), 0.0, 1e-9);
}

TEST(Features, NearestDistanceNeedsAnotherAgent) {
  const Scenario one = corridor(1, 2), two = corridor(2, 2);
  const auto a = eval::feature_table(eval::log_playback(one), eval::initial_states(one), eval::rollout_validity(one),
                                     eval::Feature::nearest_distance, one.dt);
  EXPECT_EQ(a.valid.sum(), 0.0);
  const auto b = eval::feature_table(eval::log_playback(two), eval::initial_states(two), eval::rollout_validity(two),
                                     eval::Feature::nearest_distance, two.dt);
  EXPECT_NEAR(b.value(0, 0), 10.0, 1e-12);
}

TEST(Composite, AllOnesIsOne) {
  eval::MetricReport r;
  r.likelihood = {1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(eval::composite(r, std::vector<double>(6, 1.0 / 6.0)), 1.0);
}

TEST(Composite, EqualWeightsOverTwo) {
  EXPECT_DOUBLE_EQ(eval::weighted_mean({0.5, 1.0}, {0.5, 0.5}), 0.75);
}

TEST(Composite, WeightMismatchThrows) {
  EXPECT_THROW(eval::weighted_mean({0.5, 1.0}, {1.0}), std::invalid_argument);
  EXPECT_THROW(eval::weighted_mean({0.5, 1.0}, {0.5, 0.6}), std::invalid_argument);
}

TEST(Composite, CollisionWeightFlipsRanking) {
  // a: realistic but collides; b: less realistic, no collisions
  eval::MetricReport a, b;
  a.likelihood = {0.9, 0.9, 0.9, 0.9};
  a.collision_rate = 0.5;
  b.likelihood = {0.6, 0.6, 0.6, 0.6};
  b.collision_rate = 0.0;
  const std::vector<double> equal(6, 1.0 / 6.0);
  // a: (3.6 + 0.5 + 1) / 6 = 0.85, b: (2.4 + 1 + 1) / 6 = 0.7333
  EXPECT_NEAR(eval::composite(a, equal), 0.85, 1e-12);
  EXPECT_NEAR(eval::composite(b, equal), 4.4 / 6.0, 1e-12);
  const std::vector<double> heavy{0.05, 0.05, 0.05, 0.05, 0.7, 0.1};
  // a: 0.18 + 0.35 + 0.1 = 0.63, b: 0.12 + 0.7 + 0.1 = 0.92
  EXPECT_NEAR(eval::composite(a, heavy), 0.63, 1e-12);
  EXPECT_NEAR(eval::composite(b, heavy), 0.92, 1e-12);
}

TEST(LogPlayback, MatchesLoggedOracleRow) {
  GeneratorConfig g;
  g.num_agents = 5;
  g.t_pred = 20;
  std::vector<Scenario> data;
  for (std::uint64_t s = 0; s < 5; ++s) data.push_back(generate_scenario(s, g));
  const auto res = eval::evaluate_log_playback(data, eval::EvalConfig{});
  EXPECT_EQ(res.mean.ade, 0.0);
  EXPECT_EQ(res.mean.collision_rate, 0.0);
}

TEST(EvaluateSimAgent, ThreadCountDoesNotChangeResults) {
  GeneratorConfig g;
  g.num_agents = 3;
  g.t_pred = 6;
  std::vector<Scenario> data;
  for (std::uint64_t s = 0; s < 4; ++s) data.push_back(generate_scenario(s, g));
  model::ModelConfig mc;
  mc.hidden = 16;
  mc.heads = 2;
  mc.feed_forward = 32;
  mc.max_steps = 10;
  model::BehaviorModel m(mc);
  Rng rng(3);
  model::randomize_parameters(m, "dec.head", 0.3, rng);
  eval::EvalConfig cfg;
  cfg.rollouts = 4;
  const auto a = eval::evaluate_sim_agent(m, data, cfg, 11, 1);
  const auto b = eval::evaluate_sim_agent(m, data, cfg, 11, 3);
  EXPECT_EQ(eval::to_json(a.mean).dump(), eval::to_json(b.mean).dump());
  for (const auto& r : a.scenarios) {
    EXPECT_LE(r.min_ade, r.ade);
    EXPECT_GE(r.collision_rate, 0.0);
    EXPECT_LE(r.collision_rate, 1.0);
  }
}
