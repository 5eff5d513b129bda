#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "op_cases.hpp"
#include "simagent/nn/checkpoint.hpp"
#include "simagent/nn/layers.hpp"
#include "simagent/nn/optimizer.hpp"

using namespace simagent;
using nn::Matrix;
using nn::Tensor;

TEST(Autograd, SumOfSquaresGradient) {
  Tensor x(Matrix{{1.0, 2.0, 3.0}}, true);
  nn::sum(nn::mul(x, x)).backward();
  EXPECT_EQ(x.grad(), (Matrix{{2.0, 4.0, 6.0}}));
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  Tensor x(Matrix{{3.0}}, true);
  Tensor y = nn::mul(x, x);
  nn::sum(nn::add(y, y)).backward();
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 12.0);
}

TEST(Autograd, ShapeMismatchNamesOpAndShapes) {
  Tensor a(Matrix::Zero(2, 3)), b(Matrix::Zero(2, 3));
  try {
    nn::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const nn::ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("matmul"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
  }
}

TEST(Autograd, NonFiniteValueIsAnError) {
  Tensor a(Matrix{{1e308}});
  EXPECT_THROW(nn::scale(a, 10.0), nn::NumericError);
}

TEST(Autograd, UniformCrossEntropyIsLogV) {
  for (int v : {2, 13, 169}) {
    Tensor logits(Matrix::Constant(3, v, 0.7));
    EXPECT_NEAR(nn::cross_entropy(logits, {0, v - 1, 5 % v}).item(), std::log(static_cast<double>(v)), 1e-12);
  }
}

TEST(Autograd, EveryOpMatchesFiniteDifferences) {
  Rng rng(42);
  for (const auto& c : oracle::op_cases()) {
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) worst = std::max(worst, c.run(rng));
    EXPECT_LE(worst, 1e-4) << c.name;
  }
}

TEST(Attention, SingleUnmaskedKeyReturnsItsValue) {
  Rng rng(1);
  Tensor q(oracle::random_matrix(rng, 2, 3)), k(oracle::random_matrix(rng, 4, 3)), v(oracle::random_matrix(rng, 4, 5));
  nn::Mask mask = nn::Mask::Constant(2, 4, false);
  mask(0, 2) = true;
  mask(1, 0) = true;
  const Matrix out = nn::attention(q, k, v, mask).value();
  EXPECT_LE((out.row(0) - v.value().row(2)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LE((out.row(1) - v.value().row(0)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Attention, WeightsSumToOneAndMaskedAreZero) {
  Rng rng(2);
  Tensor x(oracle::random_matrix(rng, 5, 7, 3.0));
  const nn::Mask mask = oracle::random_mask(rng, 5, 7);
  const Matrix w = nn::masked_softmax(x, mask).value();
  for (Eigen::Index r = 0; r < 5; ++r) {
    EXPECT_NEAR(w.row(r).sum(), 1.0, 1e-12);
    for (Eigen::Index c = 0; c < 7; ++c) {
      if (!mask(r, c)) EXPECT_EQ(w(r, c), 0.0);
    }
  }
}

TEST(Attention, AllMaskedRowIsAnError) {
  Tensor x(Matrix::Zero(2, 3));
  nn::Mask mask = nn::Mask::Constant(2, 3, true);
  mask.row(1).setConstant(false);
  EXPECT_THROW(nn::masked_softmax(x, mask), std::invalid_argument);
}

TEST(Adam, ZeroGradientLeavesParametersAndCountsStep) {
  nn::ParameterStore store;
  store.create("p", Matrix{{1.0, -2.0}});
  store.at("p").mutable_grad() = Matrix::Zero(1, 2);
  nn::adam_step(store, {});
  EXPECT_EQ(store.at("p").value(), (Matrix{{1.0, -2.0}}));
  EXPECT_EQ(store.step, 1u);
}

TEST(Adam, NonFiniteGradientRejected) {
  nn::ParameterStore store;
  store.create("p", Matrix{{1.0}});
  store.at("p").mutable_grad() = Matrix::Constant(1, 1, std::nan(""));
  EXPECT_THROW(nn::adam_step(store, {}), nn::NumericError);
}

TEST(Adam, MinimizesQuadratic) {
  nn::ParameterStore store;
  Tensor p = store.create("p", Matrix{{3.0}});
  nn::AdamConfig cfg;
  cfg.lr = 1e-2;
  double loss = 0.0;
  for (int i = 0; i < 5000; ++i) {
    store.zero_grad();
    Tensor d = nn::add_row(p, Tensor(Matrix{{-1.25}}));
    Tensor l = nn::sum(nn::mul(d, d));
    loss = l.item();
    l.backward();
    nn::adam_step(store, cfg);
  }
  EXPECT_LT(loss, 1e-6);
}

namespace {

nn::ParameterStore train_tiny(std::uint64_t seed, int steps) {
  nn::ParameterStore store;
  Rng rng(seed);
  nn::FeedForward ff(store, "ff", 3, 8, 2, rng);
  const Tensor x(oracle::random_matrix(rng, 6, 3));
  nn::AdamConfig cfg;
  cfg.clip_norm = 1.0;
  for (int i = 0; i < steps; ++i) {
    store.zero_grad();
    nn::cross_entropy(ff(x), {0, 1, 0, 1, 1, 0}).backward();
    nn::adam_step(store, cfg);
  }
  return store;
}

}  // namespace

TEST(Adam, IdenticalRunsAreBitIdentical) {
  EXPECT_TRUE(train_tiny(9, 100).values_equal(train_tiny(9, 100)));
}

TEST(Checkpoint, RoundtripIsBitExact) {
  nn::ParameterStore store = train_tiny(3, 10);
  const auto dir = std::filesystem::temp_directory_path() / "simagent_test_ckpt";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "a.ckpt", store, R"({"k":1})");

  nn::ParameterStore fresh = train_tiny(4, 0);
  load_checkpoint(dir / "a.ckpt", fresh, R"({"k":1})");
  EXPECT_TRUE(fresh.values_equal(store));
  EXPECT_EQ(fresh.step, store.step);
  for (std::size_t k = 0; k < store.size(); ++k) {
    EXPECT_EQ(fresh.entries()[k].m, store.entries()[k].m);
    EXPECT_EQ(fresh.entries()[k].v, store.entries()[k].v);
  }
  save_checkpoint(dir / "b.ckpt", fresh, R"({"k":1})");
  std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
  const std::string a((std::istreambuf_iterator<char>(fa)), {}), b((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(a, b);

  EXPECT_THROW(load_checkpoint(dir / "a.ckpt", fresh, R"({"k":2})"), nn::CheckpointError);
  std::filesystem::remove_all(dir);
}
