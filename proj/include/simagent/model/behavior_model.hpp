#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "simagent/dynamics.hpp"
#include "simagent/geometry.hpp"
#include "simagent/model/config.hpp"
#include "simagent/nn/layers.hpp"
#include "simagent/nn/parameters.hpp"
#include "simagent/scenario.hpp"

namespace simagent::model {

using nn::Mask;
using nn::Matrix;
using nn::Tensor;

inline constexpr int kStartToken = 169;    // decoder input before any action
inline constexpr int kUnknownToken = 170;  // decoder input after a masked target
inline constexpr int kInputVocab = 171;
inline constexpr int kHistorySteps = 11;   // most recent history states fed to the encoder
inline constexpr int kAgentFeatures = kHistorySteps * 7 + 5;

/// Query token (t, i) may attend key (t', j) iff t' <= t. Tokens are ordered step-major.
inline Mask build_causal_mask(int t_steps, int n_agents) {
  if (t_steps < 1 || n_agents < 1) throw std::invalid_argument("build_causal_mask: t_steps and n_agents must be >= 1");
  const int n = t_steps * n_agents;
  Mask m(n, n);
  for (int q = 0; q < n; ++q) {
    for (int k = 0; k < n; ++k) m(q, k) = (k / n_agents) <= (q / n_agents);
  }
  return m;
}

/// Normalized encoder inputs in the scene-centric frame.
struct SceneInputs {
  Matrix map;     // M x (2 * map_points + 2)
  Matrix agents;  // N x kAgentFeatures
  std::vector<bool> agent_valid;
  Vec2 centroid;
};

struct SceneEmbedding {
  Tensor tokens;  // (M + N) x hidden, map tokens first
  std::vector<bool> key_valid;
  std::vector<bool> agent_valid;
  Vec2 centroid;
  int num_map = 0;
  int num_agents = 0;
};

/// Decoder input for one step: previous action tokens and the kinematic states they produced.
struct StepInput {
  std::vector<int> tokens;
  std::vector<dynamics::KinematicState> states;
};

inline SceneInputs scene_inputs(const Scenario& sc, const ModelConfig& cfg) {
  SceneInputs in;
  const int n = sc.num_agents();
  in.agent_valid.resize(static_cast<std::size_t>(n));
  double cx = 0.0, cy = 0.0;
  int count = 0;
  for (int i = 0; i < n; ++i) {
    in.agent_valid[i] = sc.agents[i].current().valid;
    if (in.agent_valid[i]) {
      cx += sc.agents[i].current().position.x;
      cy += sc.agents[i].current().position.y;
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("scenario '" + sc.id + "': no valid agents at the current step");
  in.centroid = {cx / count, cy / count};
  const double ps = cfg.position_scale, vs = cfg.velocity_scale;

  in.agents = Matrix::Zero(n, kAgentFeatures);
  for (int i = 0; i < n; ++i) {
    const Agent& a = sc.agents[i];
    const int h = static_cast<int>(a.history.size());
    for (int k = 0; k < kHistorySteps; ++k) {
      const int src = h - kHistorySteps + k;
      if (src < 0 || !a.history[src].valid) continue;
      const AgentState& s = a.history[src];
      const int c = 7 * k;
      in.agents(i, c + 0) = 1.0;
      in.agents(i, c + 1) = (s.position.x - in.centroid.x) / ps;
      in.agents(i, c + 2) = (s.position.y - in.centroid.y) / ps;
      in.agents(i, c + 3) = s.velocity.x / vs;
      in.agents(i, c + 4) = s.velocity.y / vs;
      in.agents(i, c + 5) = std::cos(s.heading);
      in.agents(i, c + 6) = std::sin(s.heading);
    }
    const int c = 7 * kHistorySteps;
    in.agents(i, c + static_cast<int>(a.type)) = 1.0;
    in.agents(i, c + 3) = a.length / 5.0;
    in.agents(i, c + 4) = a.width / 5.0;
  }

  // Canonical feature order makes the encoding independent of map storage order.
  std::vector<std::size_t> order;
  for (std::size_t f = 0; f < sc.map.size(); ++f) {
    if (sc.map[f].type != FeatureType::route) order.push_back(f);
  }
  auto key = [&](std::size_t f) {
    std::vector<double> k{static_cast<double>(sc.map[f].type)};
    for (const Vec2& p : sc.map[f].polyline) {
      k.push_back(p.x);
      k.push_back(p.y);
    }
    return k;
  };
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  const int p = cfg.map_points;
  in.map = Matrix::Zero(static_cast<Eigen::Index>(order.size()), 2 * p + 2);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const MapFeature& f = sc.map[order[r]];
    const double len = geometry::polyline_length(f.polyline);
    for (int k = 0; k < p; ++k) {
      const Vec2 q = geometry::point_at_arc_length(f.polyline, len * k / (p - 1));
      in.map(static_cast<Eigen::Index>(r), 2 * k) = (q.x - in.centroid.x) / ps;
      in.map(static_cast<Eigen::Index>(r), 2 * k + 1) = (q.y - in.centroid.y) / ps;
    }
    in.map(static_cast<Eigen::Index>(r), 2 * p + (f.type == FeatureType::road_edge ? 1 : 0)) = 1.0;
  }
  return in;
}

/// Teacher-forced decoder inputs: step 0 holds start tokens and the initial states, step s the
/// tokens of step s-1 and the states they produce. Masked targets feed kUnknownToken and zero acceleration.
inline std::vector<StepInput> teacher_forced_inputs(const Scenario& sc, const std::vector<std::vector<int>>& tokens) {
  const int n = sc.num_agents();
  std::vector<StepInput> steps;
  StepInput cur;
  cur.tokens.assign(static_cast<std::size_t>(n), kStartToken);
  for (int i = 0; i < n; ++i) cur.states.push_back(dynamics::initial_state(sc, i));
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    steps.push_back(cur);
    if (t + 1 == tokens.size()) break;
    for (int i = 0; i < n; ++i) {
      const int tok = tokens[t][i];
      const Vec2 acc = tok >= 0 ? dynamics::decode_action(tok) : Vec2{};
      cur.tokens[i] = tok >= 0 ? tok : kUnknownToken;
      cur.states[i] = dynamics::step(cur.states[i], acc, sc.dt);
    }
  }
  return steps;
}

class BehaviorModel {
public:
  explicit BehaviorModel(ModelConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg_.init_seed);
    const int d = cfg_.hidden;
    map_in_ = nn::FeedForward(store_, "enc.map_in", 2 * cfg_.map_points + 2, d, d, rng);
    agent_in_ = nn::FeedForward(store_, "enc.agent_in", kAgentFeatures, d, d, rng);
    for (int l = 0; l < cfg_.encoder_layers; ++l) {
      const std::string p = "enc.L" + std::to_string(l);
      EncoderLayer e;
      e.ln1 = nn::LayerNorm(store_, p + ".ln1", d);
      e.attn = nn::MultiHeadAttention(store_, p + ".attn", d, cfg_.heads, rng);
      e.ln2 = nn::LayerNorm(store_, p + ".ln2", d);
      e.ff = nn::FeedForward(store_, p + ".ff", d, cfg_.feed_forward, d, rng);
      enc_.push_back(e);
    }
    enc_ln_ = nn::LayerNorm(store_, "enc.ln", d);

    token_emb_ = nn::Embedding(store_, "dec.token", kInputVocab, d, rng);
    id_mlp_ = nn::FeedForward(store_, "dec.id", 2, d, d, rng);
    time_emb_ = nn::Embedding(store_, "dec.time", cfg_.max_steps, d, rng);
    state_in_ = nn::Linear(store_, "dec.state", 4, d, rng);
    for (int l = 0; l < cfg_.decoder_layers; ++l) {
      const std::string p = "dec.L" + std::to_string(l);
      DecoderLayer e;
      e.ln1 = nn::LayerNorm(store_, p + ".ln1", d);
      e.self_attn = nn::MultiHeadAttention(store_, p + ".self", d, cfg_.heads, rng);
      e.ln2 = nn::LayerNorm(store_, p + ".ln2", d);
      e.cross_attn = nn::MultiHeadAttention(store_, p + ".cross", d, cfg_.heads, rng);
      e.ln3 = nn::LayerNorm(store_, p + ".ln3", d);
      e.ff = nn::FeedForward(store_, p + ".ff", d, cfg_.feed_forward, d, rng);
      dec_.push_back(e);
    }
    dec_ln_ = nn::LayerNorm(store_, "dec.ln", d);
    // Zero head: an untrained model predicts the uniform distribution.
    head_ = nn::Linear(store_, "dec.head", d, cfg_.vocab, rng, true);
  }

  BehaviorModel(const BehaviorModel&) = delete;
  BehaviorModel& operator=(const BehaviorModel&) = delete;
  BehaviorModel(BehaviorModel&&) = default;
  BehaviorModel& operator=(BehaviorModel&&) = default;

  /// Independent copy with the same values and optimizer state.
  BehaviorModel clone() const {
    BehaviorModel m(cfg_);
    for (std::size_t k = 0; k < store_.size(); ++k) {
      m.store_.entries()[k].tensor.mutable_value() = store_.entries()[k].tensor.value();
      m.store_.entries()[k].m = store_.entries()[k].m;
      m.store_.entries()[k].v = store_.entries()[k].v;
    }
    m.store_.step = store_.step;
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore& params() { return store_; }
  const nn::ParameterStore& params() const { return store_; }

  SceneEmbedding encode(const Scenario& sc) const {
    const SceneInputs in = scene_inputs(sc, cfg_);
    SceneEmbedding out;
    out.num_map = static_cast<int>(in.map.rows());
    out.num_agents = sc.num_agents();
    out.agent_valid = in.agent_valid;
    out.centroid = in.centroid;
    out.key_valid.assign(static_cast<std::size_t>(out.num_map), true);
    out.key_valid.insert(out.key_valid.end(), in.agent_valid.begin(), in.agent_valid.end());

    Tensor x = agent_in_(Tensor(in.agents));
    if (out.num_map > 0) {
      std::vector<Tensor> parts{map_in_(Tensor(in.map)), x};
      x = nn::concat_rows(parts);
    }
    const Mask mask = key_mask(out.key_valid, x.rows());
    for (const EncoderLayer& e : enc_) {
      const Tensor h = e.ln1(x);
      x = nn::add(x, e.attn(h, h, mask));
      x = nn::add(x, e.ff(e.ln2(x)));
    }
    out.tokens = enc_ln_(x);
    return out;
  }

  /// Embedded decoder tokens for one step (N rows).
  Tensor embed_step(const SceneEmbedding& scene, const StepInput& in, int step, const Tensor& ids) const {
    if (step >= cfg_.max_steps) {
      throw std::out_of_range("decoder step " + std::to_string(step) + " exceeds max_steps " +
                              std::to_string(cfg_.max_steps));
    }
    const int n = scene.num_agents;
    Matrix st(n, 4);
    for (int i = 0; i < n; ++i) {
      st(i, 0) = (in.states[i].position.x - scene.centroid.x) / cfg_.position_scale;
      st(i, 1) = (in.states[i].position.y - scene.centroid.y) / cfg_.position_scale;
      st(i, 2) = in.states[i].velocity.x / cfg_.velocity_scale;
      st(i, 3) = in.states[i].velocity.y / cfg_.velocity_scale;
    }
    Tensor x = nn::add(token_emb_(in.tokens), ids);
    x = nn::add(x, time_emb_(std::vector<int>(static_cast<std::size_t>(n), step)));
    return nn::add(x, state_in_(Tensor(std::move(st))));
  }

  /// id_i = MLP(Pos_0,i) in the normalized frame.
  Tensor agent_ids(const Scenario& sc, const SceneEmbedding& scene) const {
    Matrix pos(scene.num_agents, 2);
    for (int i = 0; i < scene.num_agents; ++i) {
      const Vec2 p = sc.agents[i].current().valid ? sc.agents[i].current().position : scene.centroid;
      pos(i, 0) = (p.x - scene.centroid.x) / cfg_.position_scale;
      pos(i, 1) = (p.y - scene.centroid.y) / cfg_.position_scale;
    }
    return id_mlp_(Tensor(std::move(pos)));
  }

  /// Logits for all (t, i) under the block-causal mask; rows are step-major, (t*N) x vocab.
  Tensor decode_logits(const Scenario& sc, const SceneEmbedding& scene, const std::vector<StepInput>& steps) const {
    const int n = scene.num_agents;
    const int t = static_cast<int>(steps.size());
    const Tensor ids = agent_ids(sc, scene);
    std::vector<Tensor> rows;
    for (int s = 0; s < t; ++s) rows.push_back(embed_step(scene, steps[s], s, ids));
    Tensor x = nn::concat_rows(rows);

    Mask self_mask = build_causal_mask(t, n);
    for (int k = 0; k < t * n; ++k) {
      if (!scene.agent_valid[k % n]) self_mask.col(k).setConstant(false);
    }
    const Mask cross_mask = key_mask(scene.key_valid, t * n);
    for (const DecoderLayer& e : dec_) {
      const Tensor h = e.ln1(x);
      x = nn::add(x, e.self_attn(h, h, self_mask));
      x = nn::add(x, e.cross_attn(e.ln2(x), scene.tokens, cross_mask));
      x = nn::add(x, e.ff(e.ln3(x)));
    }
    return head_(dec_ln_(x));
  }

  /// Column of log pi(token) for every (t, i), step-major; masked tokens give an arbitrary entry.
  Tensor token_log_probs(const Scenario& sc, const std::vector<std::vector<int>>& tokens) const {
    const SceneEmbedding scene = encode(sc);
    const Tensor logits = decode_logits(sc, scene, teacher_forced_inputs(sc, tokens));
    std::vector<int> flat;
    for (const auto& row : tokens) {
      for (int tok : row) flat.push_back(tok >= 0 ? tok : 0);
    }
    return nn::pick(nn::log_softmax(logits), std::move(flat));
  }

  /// Weight 1 for every (t, i) with a target token and an agent valid at the current step.
  static Matrix valid_weights(const Scenario& sc, const std::vector<std::vector<int>>& tokens) {
    const int n = sc.num_agents();
    Matrix w = Matrix::Zero(static_cast<Eigen::Index>(tokens.size()) * n, 1);
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      for (int i = 0; i < n; ++i) {
        if (tokens[t][i] >= 0 && sc.agents[i].current().valid) w(static_cast<Eigen::Index>(t) * n + i, 0) = 1.0;
      }
    }
    return w;
  }

  /// Mean over valid (t, i) of -log pi(a_gt | o) with ground-truth decoder inputs.
  Tensor teacher_forced_nll(const Scenario& sc, const std::vector<std::vector<int>>& gt_tokens) const {
    const Matrix w = valid_weights(sc, gt_tokens);
    const double count = w.sum();
    if (count == 0.0) throw std::invalid_argument("teacher_forced_nll: no valid targets in '" + sc.id + "'");
    return nn::weighted_sum(token_log_probs(sc, gt_tokens), w * (-1.0 / count));
  }

  /// Incremental decoding with cached keys and values; one call to log_probs() per step.
  class Session {
  public:
    Session(const BehaviorModel& model, const Scenario& sc) : model_(model), guard_() {
      scene_ = model.encode(sc);
      ids_ = model.agent_ids(sc, scene_);
      const int n = scene_.num_agents;
      pending_.tokens.assign(static_cast<std::size_t>(n), kStartToken);
      for (int i = 0; i < n; ++i) pending_.states.push_back(dynamics::initial_state(sc, i));
      for (const DecoderLayer& e : model.dec_) cross_.push_back(e.cross_attn.project(scene_.tokens));
      self_.resize(model.dec_.size());
      cross_mask_ = key_mask(scene_.key_valid, n);
    }

    int step() const { return step_; }
    int num_agents() const { return scene_.num_agents; }
    const SceneEmbedding& scene() const { return scene_; }
    /// States the pending step is conditioned on.
    const std::vector<dynamics::KinematicState>& states() const { return pending_.states; }

    /// N x vocab log-probabilities for the pending step.
    Matrix log_probs() {
      if (computed_) throw std::logic_error("Session::log_probs called twice for step " + std::to_string(step_));
      computed_ = true;
      const int n = scene_.num_agents;
      Tensor x = model_.embed_step(scene_, pending_, step_, ids_);
      const Eigen::Index keys = static_cast<Eigen::Index>(step_ + 1) * n;
      Mask self_mask(n, keys);
      for (Eigen::Index k = 0; k < keys; ++k) self_mask.col(k).setConstant(static_cast<bool>(scene_.agent_valid[k % n]));
      for (std::size_t l = 0; l < model_.dec_.size(); ++l) {
        const DecoderLayer& e = model_.dec_[l];
        const Tensor h = e.ln1(x);
        auto kv = e.self_attn.project(h);
        if (self_[l].keys.defined()) {
          std::vector<Tensor> ks{self_[l].keys, kv.keys}, vs{self_[l].values, kv.values};
          kv = {nn::concat_rows(ks), nn::concat_rows(vs)};
        }
        self_[l] = kv;
        x = nn::add(x, e.self_attn.attend(h, self_[l], self_mask));
        x = nn::add(x, e.cross_attn.attend(e.ln2(x), cross_[l], cross_mask_));
        x = nn::add(x, e.ff(e.ln3(x)));
      }
      return nn::log_softmax(model_.head_(model_.dec_ln_(x))).value();
    }

    /// Supplies the tokens chosen at the pending step and the states they led to.
    void commit(const std::vector<int>& tokens, const std::vector<dynamics::KinematicState>& next_states) {
      if (!computed_) throw std::logic_error("Session::commit before log_probs at step " + std::to_string(step_));
      pending_.tokens = tokens;
      pending_.states = next_states;
      computed_ = false;
      ++step_;
    }

  private:
    const BehaviorModel& model_;
    nn::NoGradGuard guard_;
    SceneEmbedding scene_;
    Tensor ids_;
    StepInput pending_;
    std::vector<nn::MultiHeadAttention::KeyValues> cross_;
    std::vector<nn::MultiHeadAttention::KeyValues> self_;
    Mask cross_mask_;
    int step_ = 0;
    bool computed_ = false;
  };

private:
  struct EncoderLayer {
    nn::LayerNorm ln1, ln2;
    nn::MultiHeadAttention attn;
    nn::FeedForward ff;
  };
  struct DecoderLayer {
    nn::LayerNorm ln1, ln2, ln3;
    nn::MultiHeadAttention self_attn, cross_attn;
    nn::FeedForward ff;
  };

  static Mask key_mask(const std::vector<bool>& key_valid, Eigen::Index rows) {
    Mask m(rows, static_cast<Eigen::Index>(key_valid.size()));
    for (Eigen::Index k = 0; k < m.cols(); ++k) m.col(k).setConstant(static_cast<bool>(key_valid[k]));
    return m;
  }

  ModelConfig cfg_;
  nn::ParameterStore store_;
  nn::FeedForward map_in_, agent_in_;
  std::vector<EncoderLayer> enc_;
  nn::LayerNorm enc_ln_;
  nn::Embedding token_emb_, time_emb_;
  nn::FeedForward id_mlp_;
  nn::Linear state_in_;
  std::vector<DecoderLayer> dec_;
  nn::LayerNorm dec_ln_;
  nn::Linear head_;
};

/// Overwrites every parameter whose name starts with `prefix` with N(0, stddev^2) draws.
inline void randomize_parameters(BehaviorModel& model, const std::string& prefix, double stddev, Rng& rng) {
  for (auto& e : model.params().entries()) {
    if (e.name.rfind(prefix, 0) != 0) continue;
    Matrix& v = e.tensor.mutable_value();
    for (Eigen::Index k = 0; k < v.size(); ++k) v.data()[k] = rng.normal(0.0, stddev);
  }
}

}  // namespace simagent::model
