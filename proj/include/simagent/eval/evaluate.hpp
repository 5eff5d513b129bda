#pragma once

#include <cstdint>
#include <vector>

#include "simagent/eval/metrics.hpp"
#include "simagent/model/rollout.hpp"
#include "simagent/parallel.hpp"
#include "simagent/rng.hpp"

namespace simagent::eval {

struct EvalResult {
  std::vector<MetricReport> scenarios;
  MetricReport mean;
};

/// K model rollouts per scenario. Scenario k draws from stream_seed(seed, k), so results do not depend on `threads`.
inline EvalResult evaluate_sim_agent(const model::BehaviorModel& m, const std::vector<Scenario>& data,
                                     const EvalConfig& cfg, std::uint64_t seed, int threads = 1) {
  cfg.validate();
  EvalResult out;
  out.scenarios.resize(data.size());
  parallel_for(data.size(), threads, [&](std::size_t k) {
    Rng rng(stream_seed(seed, k));
    std::vector<Trajectory> rollouts;
    for (int r = 0; r < cfg.rollouts; ++r) rollouts.push_back(model::sample_rollout(m, data[k], cfg.temperature, rng).states);
    out.scenarios[k] = evaluate_scenario(rollouts, data[k], cfg);
  });
  out.mean = mean_report(out.scenarios, cfg);
  return out;
}

/// The logged future as the only rollout.
inline EvalResult evaluate_log_playback(const std::vector<Scenario>& data, const EvalConfig& cfg) {
  cfg.validate();
  EvalResult out;
  for (const Scenario& sc : data) out.scenarios.push_back(evaluate_scenario({log_playback(sc)}, sc, cfg));
  out.mean = mean_report(out.scenarios, cfg);
  return out;
}

}  // namespace simagent::eval
