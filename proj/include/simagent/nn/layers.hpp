#pragma once

#include <string>
#include <vector>

#include "simagent/nn/parameters.hpp"
#include "simagent/nn/tensor.hpp"

namespace simagent::nn {

struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // 1 x out, undefined when disabled

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
         bool zero_init = false, bool with_bias = true) {
    weight = zero_init ? store.create_constant(name + ".w", in, out, 0.0) : store.create_glorot(name + ".w", in, out, rng);
    if (with_bias) bias = store.create_constant(name + ".b", 1, out, 0.0);
  }

  Tensor operator()(const Tensor& x) const {
    return bias.defined() ? add_row(matmul(x, weight), bias) : matmul(x, weight);
  }
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, Eigen::Index dim) {
    gain = store.create_constant(name + ".g", 1, dim, 1.0);
    bias = store.create_constant(name + ".b", 1, dim, 0.0);
  }

  Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

/// Two-layer ReLU MLP.
struct FeedForward {
  Linear in;
  Linear out;

  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, Eigen::Index dim, Eigen::Index hidden,
              Eigen::Index out_dim, Rng& rng)
      : in(store, name + ".in", dim, hidden, rng), out(store, name + ".out", hidden, out_dim, rng) {}

  Tensor operator()(const Tensor& x) const { return out(relu(in(x))); }
};

struct Embedding {
  Tensor table;

  Embedding() = default;
  Embedding(ParameterStore& store, const std::string& name, Eigen::Index count, Eigen::Index dim, Rng& rng) {
    table = store.create_normal(name, count, dim, 0.1, rng);
  }

  Tensor operator()(std::vector<int> ids) const { return gather_rows(table, std::move(ids)); }
};

/// Multi-head attention with separate query / key-value inputs.
struct MultiHeadAttention {
  Linear q, k, v, o;
  int heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, Eigen::Index dim, int num_heads, Rng& rng)
      : q(store, name + ".q", dim, dim, rng),
        k(store, name + ".k", dim, dim, rng, false, false),  // a key bias cancels in the softmax
        v(store, name + ".v", dim, dim, rng),
        o(store, name + ".o", dim, dim, rng),
        heads(num_heads) {
    if (num_heads < 1 || dim % num_heads != 0) {
      throw std::invalid_argument("MultiHeadAttention: dim " + std::to_string(dim) + " not divisible by " +
                                  std::to_string(num_heads) + " heads");
    }
  }

  struct KeyValues {
    Tensor keys;
    Tensor values;
  };

  KeyValues project(const Tensor& context) const { return {k(context), v(context)}; }

  /// Attends projected queries over precomputed key/value projections.
  Tensor attend(const Tensor& x, const KeyValues& kv, const Mask& mask) const {
    const Tensor qs = q(x);
    const Eigen::Index hd = qs.cols() / heads;
    std::vector<Tensor> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      outs.push_back(attention(slice_cols(qs, h * hd, hd), slice_cols(kv.keys, h * hd, hd),
                               slice_cols(kv.values, h * hd, hd), mask));
    }
    return o(heads == 1 ? outs[0] : concat_cols(outs));
  }

  Tensor operator()(const Tensor& x, const Tensor& context, const Mask& mask) const {
    return attend(x, project(context), mask);
  }
};

}  // namespace simagent::nn
