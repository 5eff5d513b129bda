#include <gtest/gtest.h>

#include "simagent/dynamics.hpp"
#include "simagent/rng.hpp"
#include "simagent/scenario.hpp"

using namespace simagent;
using namespace simagent::dynamics;

TEST(ActionGrid, Geometry) {
  const ActionGrid g;
  EXPECT_EQ(g.vocab_size(), 169);
  EXPECT_DOUBLE_EQ(g.spacing(), 1.0);
}

TEST(EncodeAction, Examples) {
  EXPECT_EQ(encode_action({0.0, 0.0}), 84);
  EXPECT_EQ(encode_action({-7.3, 6.2}), 156);
  EXPECT_EQ(encode_action({0.49, -0.49}), 84);
}

TEST(EncodeAction, MidpointsGoToLowerIndex) {
  EXPECT_EQ(encode_action({0.5, 0.0}), 84);
  EXPECT_EQ(encode_action({-0.5, 0.0}), 83);
  EXPECT_EQ(encode_action({0.0, 2.5}), 8 * 13 + 6);
}

TEST(EncodeAction, RejectsNonFinite) {
  EXPECT_THROW(encode_action({std::nan(""), 0.0}), std::invalid_argument);
  EXPECT_THROW(encode_action({0.0, INFINITY}), std::invalid_argument);
}

TEST(DecodeAction, Examples) {
  EXPECT_EQ(decode_action(84), (Vec2{0.0, 0.0}));
  EXPECT_EQ(decode_action(0), (Vec2{-6.0, -6.0}));
  EXPECT_THROW(decode_action(169), std::out_of_range);
  EXPECT_THROW(decode_action(-1), std::out_of_range);
}

TEST(DecodeAction, BijectionOnCenters) {
  for (int t = 0; t < 169; ++t) EXPECT_EQ(encode_action(decode_action(t)), t);
}

TEST(EncodeAction, StableUnderSmallPerturbations) {
  Rng rng(1);
  for (int k = 0; k < 2000; ++k) {
    const Vec2 a{rng.uniform(-6.4, 6.4), rng.uniform(-6.4, 6.4)};
    const ActionToken tok = encode_action(a);
    const Vec2 c = decode_action(tok);
    // Margin to the nearest snapping boundary on each axis, ignoring the clipped side.
    auto margin = [](double v, double center) {
      if (std::abs(v) >= 6.0) return 0.5;
      return 0.5 - std::abs(v - center);
    };
    const double m = std::min(margin(a.x, c.x), margin(a.y, c.y));
    if (m <= 1e-9) continue;
    const Vec2 eps{rng.uniform(-0.49, 0.49) * m, rng.uniform(-0.49, 0.49) * m};
    ASSERT_EQ(encode_action(a + eps), tok);
  }
}

TEST(Step, RestStaysAtRest) {
  const KinematicState s{{3, 4}, {0, 0}, 0.7};
  const auto n = step(s, {0, 0}, 0.1);
  EXPECT_EQ(n.position, s.position);
  EXPECT_DOUBLE_EQ(n.heading, 0.7);
}

TEST(Step, DirectSubstitution) {
  const auto n = step({{0, 0}, {2, 0}, 0.0}, {1, 0}, 0.1);
  EXPECT_NEAR(n.position.x, 0.21, 1e-15);
  EXPECT_DOUBLE_EQ(n.position.y, 0.0);
  EXPECT_NEAR(n.velocity.x, 2.1, 1e-15);
}

TEST(Step, ConstantVelocityForEightSeconds) {
  KinematicState s{{0, 0}, {5, 0}, 0.0};
  for (int k = 0; k < 80; ++k) s = step(s, decode_action(84), 0.1);
  EXPECT_NEAR(s.position.x, 40.0, 1e-12);
  EXPECT_DOUBLE_EQ(s.position.y, 0.0);
}

TEST(Step, ZeroAccelerationComposesExactly) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const Vec2 p0{rng.uniform(-100, 100), rng.uniform(-100, 100)};
    const Vec2 v0{rng.uniform(-15, 15), rng.uniform(-15, 15)};
    KinematicState s{p0, v0, 0.0};
    const int k = 1 + static_cast<int>(rng.below(80));
    for (int j = 0; j < k; ++j) s = step(s, {0, 0}, 0.1);
    const Vec2 expect = p0 + v0 * (k * 0.1);
    EXPECT_NEAR(s.position.x, expect.x, 1e-11);
    EXPECT_NEAR(s.position.y, expect.y, 1e-11);
  }
}

TEST(Step, HeadingDeadBand) {
  const auto slow = step({{0, 0}, {0.01, 0.0}, 1.0}, {0, 0.5}, 0.1);
  EXPECT_DOUBLE_EQ(slow.heading, 1.0);
  const auto fast = step({{0, 0}, {0.0, 2.0}, 0.0}, {0, 0}, 0.1);
  EXPECT_NEAR(fast.heading, std::numbers::pi / 2, 1e-15);
}

TEST(InferActions, ConstantVelocityGivesZeroToken) {
  std::vector<Vec2> pos;
  for (int k = 0; k < 12; ++k) pos.push_back({1.5 * k, -0.3 * k});
  const auto tokens = infer_actions_from_positions(pos, std::vector<bool>(pos.size(), true), 0.1);
  for (ActionToken t : tokens) EXPECT_EQ(t, 84);
}

TEST(InferActions, SecondDifferenceClipped) {
  // x = 0, 0.1, 0.3 with dt 0.1 -> accel 10 -> clipped to 6 -> ix 12.
  const std::vector<Vec2> pos{{0.0, 0.0}, {0.1, 0.0}, {0.3, 0.0}};
  const auto tokens = infer_actions_from_positions(pos, {true, true, true}, 0.1);
  ASSERT_EQ(tokens.size(), 1u);
  EXPECT_EQ(tokens[0] % 13, 12);
  EXPECT_EQ(tokens[0] / 13, 6);
}

TEST(InferActions, InvalidStepsAreMasked) {
  std::vector<Vec2> pos;
  for (int k = 0; k < 8; ++k) pos.push_back({1.0 * k, 0.0});
  std::vector<bool> valid(pos.size(), true);
  valid[4] = false;
  const auto tokens = infer_actions_from_positions(pos, valid, 0.1);
  EXPECT_EQ(tokens[2], kMaskedToken);
  EXPECT_EQ(tokens[3], kMaskedToken);
  EXPECT_EQ(tokens[4], kMaskedToken);  // re-anchors on two consecutive valid positions
  EXPECT_EQ(tokens[5], 84);
}

namespace {

/// Replays decoded GT tokens from the logged initial state and returns per-step errors.
struct ReplayErrors {
  double max_axis = 0.0;
  double sum_norm = 0.0;
};

ReplayErrors replay(const Scenario& sc) {
  ReplayErrors out;
  const auto tokens = infer_gt_actions(sc);
  for (int i = 0; i < sc.num_agents(); ++i) {
    KinematicState s = initial_state(sc, i);
    double sum = 0.0;
    for (int t = 0; t < sc.t_pred; ++t) {
      s = step(s, decode_action(tokens[t][i]), sc.dt);
      const Vec2 e = s.position - sc.agents[i].future[t].position;
      out.max_axis = std::max({out.max_axis, std::abs(e.x), std::abs(e.y)});
      sum += e.norm();
    }
    out.sum_norm = std::max(out.sum_norm, sum);
  }
  return out;
}

}  // namespace

TEST(InferGtActions, RoundtripWithinQuantizationBound) {
  for (auto layout : {RoadLayout::straight, RoadLayout::curved, RoadLayout::intersection}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      GeneratorConfig cfg;
      cfg.layout = layout;
      cfg.t_pred = 20;
      cfg.conflict = seed % 2 == 1;
      const Scenario sc = generate_scenario(seed, cfg);
      const auto err = replay(sc);
      EXPECT_LE(err.max_axis, 0.005 + 1e-12) << sc.id;
      EXPECT_LE(err.sum_norm, 0.2) << sc.id;
    }
  }
}
