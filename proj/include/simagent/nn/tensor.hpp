#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace simagent::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct Node {
  Matrix value;
  Matrix grad;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;
  bool requires_grad = false;
  const char* op = "leaf";

  void accumulate(const Matrix& g) {
    if (grad.size() == 0) {
      grad = g;
    } else {
      grad += g;
    }
  }
};

/// Row-major 2-D tensor (scalars are 1x1) participating in reverse-mode autodiff.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(Matrix value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor scalar(double v) { return Tensor(Matrix::Constant(1, 1, v)); }

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  std::vector<Eigen::Index> shape() const { return {rows(), cols()}; }
  double item() const {
    if (node_->value.size() != 1) throw ShapeError("item() on a non-scalar tensor");
    return node_->value(0, 0);
  }
  bool defined() const { return static_cast<bool>(node_); }
  const std::shared_ptr<Node>& node() const { return node_; }

  void zero_grad() { node_->grad.resize(0, 0); }

  /// Accumulates d(this)/d(leaf) into every reachable leaf that requires grad.
  void backward() const;

private:
  std::shared_ptr<Node> node_;
};

inline std::string shape_str(const Matrix& m) {
  return "[" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + "]";
}

namespace detail {

inline thread_local bool grad_disabled = false;

inline void check_finite(const char* op, const Matrix& m) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite value produced by ") + op);
}

[[noreturn]] inline void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

/// Creates the output node of an op; backward is attached only when some input needs grad.
template <class Backward>
Tensor make_result(const char* op, Matrix value, std::vector<std::shared_ptr<Node>> inputs, Backward&& bw) {
  check_finite(op, value);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (!grad_disabled) {
    for (const auto& in : inputs) needs = needs || in->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::forward<Backward>(bw);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

/// Disables graph construction on this thread while alive (inference).
class NoGradGuard {
public:
  NoGradGuard() : prev_(detail::grad_disabled) { detail::grad_disabled = true; }
  ~NoGradGuard() { detail::grad_disabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool prev_;
};

inline void Tensor::backward() const {
  if (node_->value.size() != 1) throw ShapeError("backward() requires a scalar loss, got " + shape_str(node_->value));
  if (!node_->requires_grad) return;
  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && !seen.count(child)) {
        seen.insert(child);
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->accumulate(Matrix::Ones(1, 1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
  // Interior gradients are not needed once propagated.
  for (Node* n : order) {
    if (n->backward) n->grad.resize(0, 0);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra ops

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) detail::shape_fail("matmul", a.value(), b.value());
  Matrix out = a.value() * b.value();
  return detail::make_result("matmul", std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) x.accumulate(self.grad * y.value.transpose());
    if (y.requires_grad) y.accumulate(x.value.transpose() * self.grad);
  });
}

/// a * b^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) detail::shape_fail("matmul_nt", a.value(), b.value());
  Matrix out = a.value() * b.value().transpose();
  return detail::make_result("matmul_nt", std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) x.accumulate(self.grad * y.value);
    if (y.requires_grad) y.accumulate(self.grad.transpose() * x.value);
  });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_fail("add", a.value(), b.value());
  return detail::make_result("add", a.value() + b.value(), {a.node(), b.node()}, [](Node& self) {
    for (auto& in : self.inputs) {
      if (in->requires_grad) in->accumulate(self.grad);
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_fail("sub", a.value(), b.value());
  return detail::make_result("sub", a.value() - b.value(), {a.node(), b.node()}, [](Node& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(-self.grad);
  });
}

/// a + broadcast(row) where row is 1 x cols.
inline Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) detail::shape_fail("add_row", a.value(), row.value());
  Matrix out = a.value().rowwise() + row.value().row(0);
  return detail::make_result("add_row", std::move(out), {a.node(), row.node()}, [](Node& self) {
    if (self.inputs[0]->requires_grad) self.inputs[0]->accumulate(self.grad);
    if (self.inputs[1]->requires_grad) self.inputs[1]->accumulate(self.grad.colwise().sum());
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) detail::shape_fail("mul", a.value(), b.value());
  Matrix out = a.value().cwiseProduct(b.value());
  return detail::make_result("mul", std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    Node& y = *self.inputs[1];
    if (x.requires_grad) x.accumulate(self.grad.cwiseProduct(y.value));
    if (y.requires_grad) y.accumulate(self.grad.cwiseProduct(x.value));
  });
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::make_result("scale", a.value() * s, {a.node()}, [s](Node& self) {
    self.inputs[0]->accumulate(self.grad * s);
  });
}

inline Tensor relu(const Tensor& a) {
  Matrix out = a.value().cwiseMax(0.0);
  return detail::make_result("relu", std::move(out), {a.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    x.accumulate((x.value.array() > 0.0).select(self.grad, 0.0).matrix());
  });
}

inline Tensor transpose(const Tensor& a) {
  Matrix out = a.value().transpose();
  return detail::make_result("transpose", std::move(out), {a.node()}, [](Node& self) {
    self.inputs[0]->accumulate(self.grad.transpose());
  });
}

inline Tensor sum(const Tensor& a) {
  return detail::make_result("sum", Matrix::Constant(1, 1, a.value().sum()), {a.node()}, [](Node& self) {
    Node& x = *self.inputs[0];
    x.accumulate(Matrix::Constant(x.value.rows(), x.value.cols(), self.grad(0, 0)));
  });
}

inline Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

/// sum_r w_r * a_r for a column vector a; the weights carry no gradient.
inline Tensor weighted_sum(const Tensor& a, const Matrix& weights) {
  if (a.cols() != 1 || weights.rows() != a.rows() || weights.cols() != 1) {
    detail::shape_fail("weighted_sum", a.value(), weights);
  }
  const double v = a.value().col(0).dot(weights.col(0));
  return detail::make_result("weighted_sum", Matrix::Constant(1, 1, v), {a.node()}, [weights](Node& self) {
    self.inputs[0]->accumulate(weights * self.grad(0, 0));
  });
}

// ---------------------------------------------------------------------------
// Structural ops

inline Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + shape_str(a.value()));
  }
  Matrix out = a.value().middleCols(start, count);
  return detail::make_result("slice_cols", std::move(out), {a.node()}, [start, count](Node& self) {
    Node& x = *self.inputs[0];
    Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
    g.middleCols(start, count) = self.grad;
    x.accumulate(g);
  });
}

inline Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") outside " + shape_str(a.value()));
  }
  Matrix out = a.value().middleRows(start, count);
  return detail::make_result("slice_rows", std::move(out), {a.node()}, [start, count](Node& self) {
    Node& x = *self.inputs[0];
    Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
    g.middleRows(start, count) = self.grad;
    x.accumulate(g);
  });
}

inline Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  Eigen::Index cols = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != parts[0].rows()) detail::shape_fail("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Matrix out(parts[0].rows(), cols);
  std::vector<std::shared_ptr<Node>> inputs;
  Eigen::Index c = 0;
  for (const Tensor& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
    inputs.push_back(p.node());
  }
  return detail::make_result("concat_cols", std::move(out), std::move(inputs), [](Node& self) {
    Eigen::Index c0 = 0;
    for (auto& in : self.inputs) {
      const Eigen::Index w = in->value.cols();
      if (in->requires_grad) in->accumulate(self.grad.middleCols(c0, w));
      c0 += w;
    }
  });
}

inline Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Eigen::Index rows = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != parts[0].cols()) detail::shape_fail("concat_rows", parts[0].value(), p.value());
    rows += p.rows();
  }
  Matrix out(rows, parts[0].cols());
  std::vector<std::shared_ptr<Node>> inputs;
  Eigen::Index r = 0;
  for (const Tensor& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    r += p.rows();
    inputs.push_back(p.node());
  }
  return detail::make_result("concat_rows", std::move(out), std::move(inputs), [](Node& self) {
    Eigen::Index r0 = 0;
    for (auto& in : self.inputs) {
      const Eigen::Index h = in->value.rows();
      if (in->requires_grad) in->accumulate(self.grad.middleRows(r0, h));
      r0 += h;
    }
  });
}

/// Row lookup: out[r] = table[indices[r]].
inline Tensor gather_rows(const Tensor& table, std::vector<int> indices) {
  Matrix out(static_cast<Eigen::Index>(indices.size()), table.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] < 0 || indices[r] >= table.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(indices[r]) + " outside table " +
                       shape_str(table.value()));
    }
    out.row(static_cast<Eigen::Index>(r)) = table.value().row(indices[r]);
  }
  return detail::make_result("gather_rows", std::move(out), {table.node()}, [idx = std::move(indices)](Node& self) {
    Node& t = *self.inputs[0];
    Matrix g = Matrix::Zero(t.value.rows(), t.value.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) g.row(idx[r]) += self.grad.row(static_cast<Eigen::Index>(r));
    t.accumulate(g);
  });
}

/// out[r] = a[r, indices[r]] as a column.
inline Tensor pick(const Tensor& a, std::vector<int> indices) {
  if (static_cast<Eigen::Index>(indices.size()) != a.rows()) {
    throw ShapeError("pick: " + std::to_string(indices.size()) + " indices for " + shape_str(a.value()));
  }
  Matrix out(a.rows(), 1);
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const int c = indices[static_cast<std::size_t>(r)];
    if (c < 0 || c >= a.cols()) throw ShapeError("pick: column " + std::to_string(c) + " outside " + shape_str(a.value()));
    out(r, 0) = a.value()(r, c);
  }
  return detail::make_result("pick", std::move(out), {a.node()}, [idx = std::move(indices)](Node& self) {
    Node& x = *self.inputs[0];
    Matrix g = Matrix::Zero(x.value.rows(), x.value.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, idx[static_cast<std::size_t>(r)]) = self.grad(r, 0);
    x.accumulate(g);
  });
}

// ---------------------------------------------------------------------------
// Normalization and probability ops

/// Row-wise layer normalization with learned gain and bias (both 1 x cols).
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  if (gain.rows() != 1 || gain.cols() != x.cols()) detail::shape_fail("layer_norm", x.value(), gain.value());
  if (bias.rows() != 1 || bias.cols() != x.cols()) detail::shape_fail("layer_norm", x.value(), bias.value());
  const Eigen::Index n = x.rows(), d = x.cols();
  Matrix xhat(n, d);
  Eigen::VectorXd inv_std(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = x.value().row(r).mean();
    const auto centered = x.value().row(r).array() - mu;
    const double var = centered.square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    xhat.row(r) = (centered * inv_std(r)).matrix();
  }
  Matrix out = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() + bias.value().row(0).array();
  return detail::make_result(
      "layer_norm", std::move(out), {x.node(), gain.node(), bias.node()},
      [xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
        Node& xn = *self.inputs[0];
        Node& g = *self.inputs[1];
        Node& b = *self.inputs[2];
        if (g.requires_grad) g.accumulate(self.grad.cwiseProduct(xhat).colwise().sum());
        if (b.requires_grad) b.accumulate(self.grad.colwise().sum());
        if (xn.requires_grad) {
          const double d = static_cast<double>(xhat.cols());
          Matrix dxhat = self.grad.array().rowwise() * g.value.row(0).array();
          Matrix dx(xhat.rows(), xhat.cols());
          for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
            const double m1 = dxhat.row(r).sum();
            const double m2 = dxhat.row(r).dot(xhat.row(r));
            dx.row(r) = (inv_std(r) / d) * (d * dxhat.row(r).array() - m1 - xhat.row(r).array() * m2).matrix();
          }
          xn.accumulate(dx);
        }
      });
}

/// Row-wise softmax over entries where mask is true; masked entries get weight 0.
inline Tensor masked_softmax(const Tensor& x, const Mask& mask) {
  if (mask.rows() != x.rows() || mask.cols() != x.cols()) {
    throw ShapeError("masked_softmax: mask [" + std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) +
                     "] vs scores " + shape_str(x.value()));
  }
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c)) mx = std::max(mx, x.value()(r, c));
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw std::invalid_argument("masked_softmax: row " + std::to_string(r) + " has every key masked");
    }
    double total = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (mask(r, c)) {
        out(r, c) = std::exp(x.value()(r, c) - mx);
        total += out(r, c);
      }
    }
    out.row(r) /= total;
  }
  Matrix y = out;
  return detail::make_result("masked_softmax", std::move(out), {x.node()}, [y = std::move(y)](Node& self) {
    const Eigen::VectorXd dots = (self.grad.cwiseProduct(y)).rowwise().sum();
    Matrix dx = y.cwiseProduct(self.grad.colwise() - dots);
    self.inputs[0]->accumulate(dx);
  });
}

/// Row-wise log-softmax.
inline Tensor log_softmax(const Tensor& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mx = x.value().row(r).maxCoeff();
    const double lse = mx + std::log((x.value().row(r).array() - mx).exp().sum());
    out.row(r) = x.value().row(r).array() - lse;
  }
  Matrix p = out.array().exp().matrix();
  return detail::make_result("log_softmax", std::move(out), {x.node()}, [p = std::move(p)](Node& self) {
    const Eigen::VectorXd row_sums = self.grad.rowwise().sum();
    Matrix dx = self.grad - (p.array().colwise() * row_sums.array()).matrix();
    self.inputs[0]->accumulate(dx);
  });
}

/// Mean of -log softmax(logits)[r, target_r] over rows with target >= 0.
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows()) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     shape_str(logits.value()));
  }
  std::vector<int> safe(targets.size());
  Matrix w(logits.rows(), 1);
  double valid = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    safe[r] = targets[r] >= 0 ? targets[r] : 0;
    w(static_cast<Eigen::Index>(r), 0) = targets[r] >= 0 ? 1.0 : 0.0;
    valid += w(static_cast<Eigen::Index>(r), 0);
  }
  if (valid == 0.0) throw std::invalid_argument("cross_entropy: every target is masked");
  return weighted_sum(pick(log_softmax(logits), std::move(safe)), w * (-1.0 / valid));
}

// ---------------------------------------------------------------------------
// Attention

/// Scaled dot-product attention: softmax(q k^T / sqrt(d), mask) v.
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const Mask& mask) {
  if (q.cols() != k.cols()) detail::shape_fail("attention(q,k)", q.value(), k.value());
  if (k.rows() != v.rows()) detail::shape_fail("attention(k,v)", k.value(), v.value());
  const double s = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return matmul(masked_softmax(scale(matmul_nt(q, k), s), mask), v);
}

}  // namespace simagent::nn
