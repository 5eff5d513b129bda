#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "simagent/nn/tensor.hpp"
#include "simagent/rng.hpp"

namespace simagent::nn {

/// Named trainable tensors in insertion order, plus adaptive-moment optimizer state.
class ParameterStore {
public:
  struct Entry {
    std::string name;
    Tensor tensor;
    Matrix m;  // first moment
    Matrix v;  // second moment
  };

  Tensor create(const std::string& name, Matrix init) {
    if (index_.count(name)) throw std::invalid_argument("ParameterStore: duplicate parameter '" + name + "'");
    index_[name] = entries_.size();
    const auto r = init.rows(), c = init.cols();
    entries_.push_back({name, Tensor(std::move(init), true), Matrix::Zero(r, c), Matrix::Zero(r, c)});
    return entries_.back().tensor;
  }

  /// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
  Tensor create_glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(-a, a);
    }
    return create(name, std::move(m));
  }

  Tensor create_constant(const std::string& name, Eigen::Index rows, Eigen::Index cols, double v) {
    return create(name, Matrix::Constant(rows, cols, v));
  }

  Tensor create_normal(const std::string& name, Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, stddev);
    }
    return create(name, std::move(m));
  }

  Tensor& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
    return entries_[it->second].tensor;
  }
  const Tensor& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParameterStore: no parameter '" + name + "'");
    return entries_[it->second].tensor;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.tensor.value().size());
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  std::uint64_t step = 0;

  void reset_optimizer_state() {
    for (auto& e : entries_) {
      e.m.setZero();
      e.v.setZero();
    }
    step = 0;
  }

  /// Deep copy: new tensors with the same values and optimizer state, no shared nodes.
  ParameterStore clone() const {
    ParameterStore out;
    for (const auto& e : entries_) {
      out.create(e.name, e.tensor.value());
      out.entries_.back().m = e.m;
      out.entries_.back().v = e.v;
    }
    out.step = step;
    return out;
  }

  bool values_equal(const ParameterStore& other) const {
    if (other.entries_.size() != entries_.size()) return false;
    for (std::size_t k = 0; k < entries_.size(); ++k) {
      if (entries_[k].name != other.entries_[k].name) return false;
      if (entries_[k].tensor.value() != other.entries_[k].tensor.value()) return false;
    }
    return true;
  }

private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace simagent::nn
