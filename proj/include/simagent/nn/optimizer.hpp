#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>

#include "simagent/nn/parameters.hpp"

namespace simagent::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Rescale gradients when their global L2 norm exceeds this value.
  std::optional<double> clip_norm;
};

inline double global_grad_norm(const ParameterStore& store) {
  double sq = 0.0;
  for (const auto& e : store.entries()) {
    if (e.tensor.grad().size() != 0) sq += e.tensor.grad().squaredNorm();
  }
  return std::sqrt(sq);
}

/// One bias-corrected adaptive-moment update from the gradients held by the store.
/// Parameters without a gradient are treated as having a zero gradient.
inline void adam_step(ParameterStore& store, const AdamConfig& cfg) {
  for (const auto& e : store.entries()) {
    if (e.tensor.grad().size() != 0 && !e.tensor.grad().allFinite()) {
      throw NumericError("adam_step: non-finite gradient for '" + e.name + "'");
    }
  }
  double factor = 1.0;
  if (cfg.clip_norm) {
    const double norm = global_grad_norm(store);
    if (norm > *cfg.clip_norm) factor = *cfg.clip_norm / norm;
  }
  ++store.step;
  const double t = static_cast<double>(store.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& e : store.entries()) {
    Matrix& p = e.tensor.mutable_value();
    if (e.tensor.grad().size() == 0) {
      e.m *= cfg.beta1;
      e.v *= cfg.beta2;
    } else {
      const Matrix g = e.tensor.grad() * factor;
      e.m = cfg.beta1 * e.m + (1.0 - cfg.beta1) * g;
      e.v = cfg.beta2 * e.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    }
    p.array() -= cfg.lr * (e.m.array() / c1) / ((e.v.array() / c2).sqrt() + cfg.eps);
  }
}

}  // namespace simagent::nn
