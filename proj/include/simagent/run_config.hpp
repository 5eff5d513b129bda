#pragma once

#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simagent/corpus.hpp"
#include "simagent/eval/metrics.hpp"
#include "simagent/json_fields.hpp"
#include "simagent/model/config.hpp"
#include "simagent/planner/planner.hpp"
#include "simagent/planner/policy_eval.hpp"
#include "simagent/rl/training.hpp"

namespace simagent {

struct PlannerEvalConfig {
  planner::PlannerFamilyConfig family;
  planner::RewardWeights weights;
  planner::VehicleParams vehicle;
  double temperature = 1.0;
  int scenarios = 50;  // held-out scenarios used when no file is given

  void validate() const {
    if (family.j_values.empty() || family.d_values.empty()) throw ConfigError("planner_eval: empty J or D list");
    for (int j : family.j_values) {
      if (j < 1) throw ConfigError("planner_eval: J values must be >= 1");
    }
    for (int d : family.d_values) {
      if (d < 1) throw ConfigError("planner_eval: D values must be >= 1");
    }
    weights.validate();
    vehicle.validate();
    if (temperature < 0.0) throw ConfigError("planner_eval: temperature must be >= 0");
  }
};

/// Everything a run needs; the resolved copy is stored in each run directory.
struct RunConfig {
  std::uint64_t seed = 0;
  CorpusConfig generator;
  model::ModelConfig model;
  rl::PretrainConfig pretrain;
  rl::FinetuneConfig finetune;
  eval::EvalConfig evaluation;
  PlannerEvalConfig planner_eval;

  RunConfig() {
    model.max_steps = 20;
    pretrain.iters = 5000;
    pretrain.stop_nll = 0.0;
    finetune.iters = 300;
    finetune.batch = 64;
    finetune.optimizer.lr = 5e-4;
    evaluation.rollouts = 32;
  }

  void validate() const {
    generator.validate();
    model.validate();
    if (model.max_steps < generator.t_pred) throw ConfigError("model.max_steps must cover generator.t_pred");
    if (pretrain.iters < 0 || pretrain.batch < 1 || pretrain.log_every < 1) {
      throw ConfigError("pretrain: iters >= 0, batch >= 1 and log_every >= 1 required");
    }
    if (finetune.iters < 0 || finetune.batch < 1 || finetune.log_every < 1 || finetune.checkpoint_every < 0) {
      throw ConfigError("finetune: iters >= 0, batch >= 1, log_every >= 1 and checkpoint_every >= 0 required");
    }
    for (const auto* o : {&pretrain.optimizer, &finetune.optimizer}) {
      if (!(o->lr > 0.0)) throw ConfigError("optimizer: lr must be positive");
      if (!(o->beta1 >= 0.0 && o->beta1 < 1.0 && o->beta2 >= 0.0 && o->beta2 < 1.0)) {
        throw ConfigError("optimizer: betas must be in [0, 1)");
      }
      if (!(o->eps > 0.0)) throw ConfigError("optimizer: eps must be positive");
    }
    if (finetune.temperature < 0.0) throw ConfigError("finetune: temperature must be >= 0");
    try {
      finetune.reward.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("finetune: ") + e.what());
    }
    evaluation.validate();
    planner_eval.validate();
  }
};

namespace detail {

inline nlohmann::json optimizer_json(const rl::OptimizerConfig& o) {
  return {{"lr", o.lr}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}, {"clip_norm", o.clip_norm}};
}

inline void read_optimizer(FieldReader& r, rl::OptimizerConfig& o) {
  r("lr", o.lr)("beta1", o.beta1)("beta2", o.beta2)("eps", o.eps)("clip_norm", o.clip_norm);
}

inline nlohmann::json histogram_json(const eval::HistogramSpec& h) {
  return {{"lo", h.lo}, {"hi", h.hi}, {"bins", h.bins}, {"smoothing", h.smoothing}};
}

inline void read_histogram(const nlohmann::json& j, const std::string& name, eval::HistogramSpec& h) {
  FieldReader r(j, "evaluation.histograms." + name);
  r("lo", h.lo)("hi", h.hi)("bins", h.bins)("smoothing", h.smoothing);
  r.finish();
}

}  // namespace detail

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& p = c.pretrain;
  const auto& f = c.finetune;
  const auto& e = c.evaluation;
  const auto& q = c.planner_eval;
  nlohmann::json hist;
  for (eval::Feature feat : eval::kFeatures) hist[eval::to_string(feat)] = detail::histogram_json(e.histograms.at(feat));
  nlohmann::json pre = detail::optimizer_json(p.optimizer);
  pre.update({{"iters", p.iters}, {"batch", p.batch}, {"stop_nll", p.stop_nll}, {"log_every", p.log_every}});
  nlohmann::json fin = detail::optimizer_json(f.optimizer);
  fin.update({{"iters", f.iters},
              {"batch", f.batch},
              {"temperature", f.temperature},
              {"lambda_collision", f.reward.lambda_collision},
              {"gamma", f.reward.gamma},
              {"log_every", f.log_every},
              {"checkpoint_every", f.checkpoint_every}});
  return {{"seed", c.seed},
          {"generator", c.generator},
          {"model", c.model},
          {"pretrain", pre},
          {"finetune", fin},
          {"evaluation",
           {{"rollouts", e.rollouts},
            {"temperature", e.temperature},
            {"d_offroad", e.d_offroad},
            {"histograms", hist},
            {"composite_weights", e.composite_weights}}},
          {"planner_eval",
           {{"j_values", q.family.j_values},
            {"d_values", q.family.d_values},
            {"collision_weight", q.weights.collision},
            {"offroad_weight", q.weights.offroad},
            {"offroute_weight", q.weights.offroute},
            {"progress_weight", q.weights.progress},
            {"offroute_threshold", q.weights.offroute_threshold},
            {"d_offroad", q.weights.d_offroad},
            {"wheelbase", q.vehicle.wheelbase},
            {"max_steer", q.vehicle.max_steer},
            {"accel_min", q.vehicle.accel_min},
            {"accel_max", q.vehicle.accel_max},
            {"temperature", q.temperature},
            {"scenarios", q.scenarios}}}};
}

/// Overlays the keys present in `j` onto `c`; unknown keys anywhere are errors.
inline void apply_json(const nlohmann::json& j, RunConfig& c) {
  FieldReader top(j, "config");
  nlohmann::json generator = nlohmann::json::object(), model = generator, pre = generator, fin = generator,
                 ev = generator, pe = generator;
  top("seed", c.seed)("generator", generator)("model", model)("pretrain", pre)("finetune", fin)("evaluation", ev)(
      "planner_eval", pe);
  top.finish();

  {
    nlohmann::json merged = c.generator;
    merged.update(generator);
    c.generator = merged.get<CorpusConfig>();
  }
  {
    nlohmann::json merged = c.model;
    merged.update(model);
    c.model = merged.get<model::ModelConfig>();
  }
  {
    FieldReader r(pre, "pretrain");
    detail::read_optimizer(r, c.pretrain.optimizer);
    r("iters", c.pretrain.iters)("batch", c.pretrain.batch)("stop_nll", c.pretrain.stop_nll)("log_every",
                                                                                               c.pretrain.log_every);
    r.finish();
  }
  {
    auto& f = c.finetune;
    FieldReader r(fin, "finetune");
    detail::read_optimizer(r, f.optimizer);
    r("iters", f.iters)("batch", f.batch)("temperature", f.temperature)("lambda_collision", f.reward.lambda_collision)(
        "gamma", f.reward.gamma)("log_every", f.log_every)("checkpoint_every", f.checkpoint_every);
    r.finish();
  }
  {
    auto& e = c.evaluation;
    FieldReader r(ev, "evaluation");
    nlohmann::json hist = nlohmann::json::object();
    r("rollouts", e.rollouts)("temperature", e.temperature)("d_offroad", e.d_offroad)("histograms", hist)(
        "composite_weights", e.composite_weights);
    r.finish();
    FieldReader h(hist, "evaluation.histograms");
    nlohmann::json parts[4];
    for (std::size_t k = 0; k < 4; ++k) {
      parts[k] = nlohmann::json::object();
      h(eval::to_string(eval::kFeatures[k]).c_str(), parts[k]);
    }
    h.finish();
    for (std::size_t k = 0; k < 4; ++k) {
      detail::read_histogram(parts[k], eval::to_string(eval::kFeatures[k]), e.histograms.at(eval::kFeatures[k]));
    }
  }
  {
    auto& q = c.planner_eval;
    FieldReader r(pe, "planner_eval");
    r("j_values", q.family.j_values)("d_values", q.family.d_values)("collision_weight", q.weights.collision)(
        "offroad_weight", q.weights.offroad)("offroute_weight", q.weights.offroute)(
        "progress_weight", q.weights.progress)("offroute_threshold", q.weights.offroute_threshold)(
        "d_offroad", q.weights.d_offroad)("wheelbase", q.vehicle.wheelbase)("max_steer", q.vehicle.max_steer)(
        "accel_min", q.vehicle.accel_min)("accel_max", q.vehicle.accel_max)("temperature", q.temperature)(
        "scenarios", q.scenarios);
    r.finish();
  }
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  apply_json(j, c);
  c.validate();
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
}

inline constexpr const char* kEnvPrefix = "SIMAGENT_";

/// SIMAGENT_SEED and SIMAGENT_<SECTION>_<KEY> (upper case) override top-level keys of each section.
/// Values are parsed as JSON, falling back to a plain string.
inline nlohmann::json env_overrides(char** envp) {
  nlohmann::json out = nlohmann::json::object();
  if (envp == nullptr) return out;
  const RunConfig defaults;
  const nlohmann::json shape = to_json(defaults);
  auto upper = [](std::string s) {
    for (char& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return s;
  };
  for (char** e = envp; *e != nullptr; ++e) {
    const std::string entry(*e);
    const auto eq = entry.find('=');
    if (eq == std::string::npos || entry.rfind(kEnvPrefix, 0) != 0) continue;
    const std::string name = entry.substr(std::char_traits<char>::length(kEnvPrefix), eq - std::char_traits<char>::length(kEnvPrefix));
    const std::string raw = entry.substr(eq + 1);
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
      value = raw;
    }
    if (name == "SEED") {
      out["seed"] = value;
      continue;
    }
    bool matched = false;
    for (auto it = shape.begin(); it != shape.end() && !matched; ++it) {
      if (!it->is_object()) continue;
      const std::string section = upper(it.key()) + "_";
      if (name.rfind(section, 0) != 0) continue;
      const std::string key = name.substr(section.size());
      for (auto kt = it->begin(); kt != it->end(); ++kt) {
        if (upper(kt.key()) == key) {
          out[it.key()][kt.key()] = value;
          matched = true;
          break;
        }
      }
    }
    if (!matched) throw ConfigError("environment variable " + std::string(kEnvPrefix) + name + " names no config key");
  }
  return out;
}

}  // namespace simagent
