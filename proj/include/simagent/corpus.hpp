#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "simagent/json_fields.hpp"
#include "simagent/rng.hpp"
#include "simagent/scenario.hpp"

namespace simagent {

/// A mixed synthetic corpus: layouts cycle in order, agent counts and conflict flags are drawn per scenario.
struct CorpusConfig {
  int t_pred = 20;
  int min_agents = 2;
  int max_agents = 8;
  double density = 1.0;
  /// Probability that a scenario is generated with a conflict geometry; 1 makes a conflict-only corpus.
  double conflict_fraction = 0.5;
  std::vector<std::string> layouts{"straight", "curved", "intersection"};

  void validate() const {
    if (t_pred < 1) throw ConfigError("generator: t_pred must be >= 1");
    if (min_agents < 1 || max_agents < min_agents || max_agents > kMaxAgents) {
      throw ConfigError("generator: need 1 <= min_agents <= max_agents <= " + std::to_string(kMaxAgents));
    }
    if (!(conflict_fraction >= 0.0 && conflict_fraction <= 1.0)) {
      throw ConfigError("generator: conflict_fraction must be in [0, 1]");
    }
    if (!(density > 0.0)) throw ConfigError("generator: density must be positive");
    if (layouts.empty()) throw ConfigError("generator: layouts must not be empty");
    for (const auto& l : layouts) {
      try {
        road_layout_from_string(l);
      } catch (const std::exception&) {
        throw ConfigError("generator: unknown layout '" + l + "'");
      }
    }
  }
};

inline void to_json(nlohmann::json& j, const CorpusConfig& c) {
  j = {{"t_pred", c.t_pred},
       {"min_agents", c.min_agents},
       {"max_agents", c.max_agents},
       {"density", c.density},
       {"conflict_fraction", c.conflict_fraction},
       {"layouts", c.layouts}};
}

inline void from_json(const nlohmann::json& j, CorpusConfig& c) {
  FieldReader r(j, "generator");
  r("t_pred", c.t_pred)("min_agents", c.min_agents)("max_agents", c.max_agents)("density", c.density)(
      "conflict_fraction", c.conflict_fraction)("layouts", c.layouts);
  r.finish();
}

/// Scenario k depends only on (seed, k, config), so a corpus is a prefix of any larger one.
inline std::vector<Scenario> make_corpus(const CorpusConfig& cfg, int count, std::uint64_t seed) {
  cfg.validate();
  std::vector<Scenario> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    Rng rng(stream_seed(seed, 2 * static_cast<std::uint64_t>(k)));
    GeneratorConfig g;
    g.t_pred = cfg.t_pred;
    g.density = cfg.density;
    g.layout = road_layout_from_string(cfg.layouts[static_cast<std::size_t>(k) % cfg.layouts.size()]);
    g.num_agents = cfg.min_agents + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_agents - cfg.min_agents + 1)));
    g.conflict = rng.uniform() < cfg.conflict_fraction;
    Scenario sc = generate_scenario(stream_seed(seed, 2 * static_cast<std::uint64_t>(k) + 1), g);
    sc.id = "s" + std::to_string(seed) + "-" + std::to_string(k) + (g.conflict ? "-c" : "");
    out.push_back(std::move(sc));
  }
  return out;
}

}  // namespace simagent
