#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "simagent/corpus.hpp"
#include "simagent/eval/evaluate.hpp"
#include "simagent/model/behavior_model.hpp"
#include "simagent/model/rollout.hpp"
#include "simagent/nn/checkpoint.hpp"
#include "simagent/planner/policy_eval.hpp"
#include "simagent/rl/training.hpp"
#include "simagent/run_config.hpp"
#include "simagent/scenario_io.hpp"

extern char** environ;

namespace fs = std::filesystem;
using namespace simagent;
using nlohmann::json;

namespace {

struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string config_path;
  std::string out;
  std::string runs_dir = "runs";
  int threads = 1;
  bool print_config = false;
};

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CliError("cannot write '" + path.string() + "'");
  os << text;
  if (!os) throw CliError("write to '" + path.string() + "' failed");
}

/// Creates the run directory and stores the resolved config in it.
fs::path open_run_dir(const std::string& sub, const GlobalOptions& g, const RunConfig& cfg) {
  fs::path dir;
  if (!g.out.empty()) {
    dir = g.out;
  } else {
    const std::string base = sub + "-" + timestamp() + "-" + std::to_string(cfg.seed);
    dir = fs::path(g.runs_dir) / base;
    for (int k = 1; fs::exists(dir); ++k) dir = fs::path(g.runs_dir) / (base + "-" + std::to_string(k));
  }
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
  return dir;
}

model::BehaviorModel load_model(const std::string& path, const RunConfig& cfg) {
  const auto header = nn::read_checkpoint_header(path);
  const std::string expected = model::canonical_json(cfg.model);
  if (header.config_json != expected) {
    throw CliError("checkpoint '" + path + "' was written for model config " + header.config_json +
                   " but the resolved config has " + expected);
  }
  model::BehaviorModel m(cfg.model);
  nn::load_checkpoint(path, m.params(), expected);
  return m;
}

std::vector<Scenario> load_scenarios(const std::string& path) {
  auto data = io::read_scenarios(path);
  if (data.empty()) throw CliError("no scenarios in '" + path + "'");
  return data;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// ---------------------------------------------------------------------------

int cmd_gen(const GlobalOptions& g, const RunConfig& cfg, int count) {
  if (count < 1) throw CliError("--count must be >= 1");
  const auto data = make_corpus(cfg.generator, count, cfg.seed);
  // --out names the scenario file here; the run directory goes under --runs-dir.
  GlobalOptions run = g;
  run.out.clear();
  const fs::path dir = open_run_dir("gen-scenarios", run, cfg);
  const fs::path file = g.out.empty() ? dir / "scenarios.jsonl" : fs::path(g.out);
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  io::write_scenarios(file.string(), data);
  write_text(dir / "manifest.json", json{{"scenarios", file.string()}, {"count", count}}.dump(2) + "\n");
  std::cerr << "wrote " << count << " scenarios to " << file.string() << " (run " << dir.string() << ")\n";
  return 0;
}

int cmd_pretrain(const GlobalOptions& g, const RunConfig& cfg, const std::string& scenarios) {
  const auto data = load_scenarios(scenarios);
  const fs::path dir = open_run_dir("pretrain", g, cfg);
  model::BehaviorModel m(cfg.model);
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  rl::pretrain(m, data, cfg.pretrain, cfg.seed, [&](const rl::PretrainLogEntry& e) {
    log << json(e).dump() << "\n" << std::flush;
    std::cerr << "pretrain iter " << e.iter << " nll " << fmt(e.nll) << "\n";
  });
  nn::save_checkpoint(dir / "model.ckpt", m.params(), model::canonical_json(cfg.model));
  std::cerr << "checkpoint " << (dir / "model.ckpt").string() << "\n";
  return 0;
}

int cmd_finetune(const GlobalOptions& g, const RunConfig& cfg, const std::string& scenarios, const std::string& from,
                 bool from_scratch) {
  if (from.empty() == !from_scratch) throw CliError("finetune needs exactly one of --from CKPT or --from-scratch");
  const auto data = load_scenarios(scenarios);
  model::BehaviorModel m = from_scratch ? model::BehaviorModel(cfg.model) : load_model(from, cfg);
  const fs::path dir = open_run_dir("finetune", g, cfg);
  fs::create_directories(dir / "checkpoints");
  const std::string fingerprint = model::canonical_json(cfg.model);
  std::ofstream log(dir / "train_log.jsonl", std::ios::binary);
  int status = 0;
  try {
    rl::finetune(
        m, data, cfg.finetune, cfg.seed,
        [&](const rl::FinetuneLogEntry& e) {
          log << json(e).dump() << "\n" << std::flush;
          std::cerr << "finetune iter " << e.iter << " loss " << fmt(e.loss) << " reward " << fmt(e.mean_reward)
                    << " collision " << fmt(e.collision_rate) << " ade " << fmt(e.ade) << "\n";
        },
        [&](int it) {
          nn::save_checkpoint(dir / "checkpoints" / ("iter-" + std::to_string(it) + ".ckpt"), m.params(), fingerprint);
        });
  } catch (const rl::TrainingAborted& e) {
    std::cerr << "error: " << e.what() << "; keeping the last good parameters\n";
    status = 3;
  }
  nn::save_checkpoint(dir / "model.ckpt", m.params(), fingerprint);
  std::cerr << "checkpoint " << (dir / "model.ckpt").string() << "\n";
  return status;
}

int cmd_rollout(const GlobalOptions& g, const RunConfig& cfg, const std::string& scenarios, const std::string& from,
                int count) {
  const auto data = load_scenarios(scenarios);
  const model::BehaviorModel m = load_model(from, cfg);
  const fs::path dir = open_run_dir("rollout", g, cfg);
  const int k_rollouts = count > 0 ? count : cfg.evaluation.rollouts;
  std::vector<std::string> lines(data.size());
  parallel_for(data.size(), g.threads, [&](std::size_t s) {
    Rng rng(stream_seed(cfg.seed, s));
    std::string out;
    for (int k = 0; k < k_rollouts; ++k) {
      const auto r = model::sample_rollout(m, data[s], cfg.evaluation.temperature, rng);
      json positions = json::array();
      for (const auto& step : r.states) {
        json row = json::array();
        for (const auto& st : step) row.push_back({st.position.x, st.position.y});
        positions.push_back(row);
      }
      out += json{{"scenario", data[s].id}, {"rollout", k}, {"tokens", r.tokens}, {"positions", positions}}.dump() + "\n";
    }
    lines[s] = std::move(out);
  });
  std::string all;
  for (const auto& l : lines) all += l;
  write_text(dir / "rollouts.jsonl", all);
  std::cerr << "wrote " << k_rollouts << " rollouts per scenario to " << (dir / "rollouts.jsonl").string() << "\n";
  return 0;
}

int cmd_eval_sim(const GlobalOptions& g, const RunConfig& cfg, const std::string& scenarios,
                 const std::string& sim_agent) {
  const auto data = load_scenarios(scenarios);
  std::optional<model::BehaviorModel> m;
  if (sim_agent != "log") m.emplace(load_model(sim_agent, cfg));
  const fs::path dir = open_run_dir("eval-sim", g, cfg);
  const eval::EvalResult res = m ? eval::evaluate_sim_agent(*m, data, cfg.evaluation, cfg.seed, g.threads)
                                 : eval::evaluate_log_playback(data, cfg.evaluation);
  std::string csv = eval::csv_header() + "\n";
  for (std::size_t k = 0; k < data.size(); ++k) csv += eval::csv_row(data[k].id, res.scenarios[k]) + "\n";
  write_text(dir / "per_scenario.csv", csv);
  const json report{{"sim_agent", sim_agent}, {"scenarios", data.size()}, {"metrics", eval::to_json(res.mean)}};
  write_text(dir / "metrics.json", report.dump(2) + "\n");
  std::cerr << eval::to_json(res.mean).dump() << "\n";
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

int cmd_eval_planners(const GlobalOptions& g, const RunConfig& cfg, const std::string& scenarios,
                      const std::string& sim_agents) {
  const auto data = load_scenarios(scenarios);
  const auto names = split_list(sim_agents);
  if (names.empty()) throw CliError("--sim-agents is empty");
  std::vector<std::unique_ptr<model::BehaviorModel>> models;
  std::vector<planner::SimAgentEntry> agents;
  for (const auto& n : names) {
    if (n == "log") {
      agents.push_back(planner::log_playback_agent());
      continue;
    }
    models.push_back(std::make_unique<model::BehaviorModel>(load_model(n, cfg)));
    std::string label = fs::path(n).stem().string();
    if (label == "model") label = fs::path(n).parent_path().filename().string();
    agents.push_back(planner::model_agent(label, *models.back(), cfg.planner_eval.temperature));
  }
  const fs::path dir = open_run_dir("eval-planners", g, cfg);
  const auto& pe = cfg.planner_eval;
  const auto matrix =
      planner::score_sim_agents(agents, pe.family.specs(), data, pe.weights, pe.vehicle, cfg.seed, g.threads);
  write_text(dir / "eval_matrix.json", matrix.to_json().dump(2) + "\n");
  write_text(dir / "eval_matrix.csv", matrix.to_csv());
  std::string returns = "planner";
  for (const auto& n : matrix.sim_agents) returns += "," + n;
  returns += "\n";
  for (std::size_t p = 0; p < matrix.planners.size(); ++p) {
    returns += matrix.planners[p];
    for (std::size_t a = 0; a < matrix.sim_agents.size(); ++a) returns += "," + fmt(matrix.returns[a][p]);
    returns += "\n";
  }
  write_text(dir / "returns.csv", returns);
  std::cerr << matrix.to_csv();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop behavior model training and evaluation"};
  app.require_subcommand(0, 1);
  app.fallthrough();
  GlobalOptions g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "global seed (overrides the config file)");
  app.add_option("--config", g.config_path, "JSON config file; missing keys keep their defaults");
  app.add_option("--out", g.out, "run directory (gen-scenarios: scenario file)");
  app.add_option("--runs-dir", g.runs_dir, "parent of timestamped run directories")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads for rollout and evaluation")->check(CLI::PositiveNumber);
  app.add_flag("--print-config", g.print_config, "print the resolved config and exit");

  std::string scenarios, from, sim_agent = "log", sim_agents = "log";
  int count = 100, rollouts = 0;
  std::optional<int> iters;
  std::optional<double> lambda;
  bool from_scratch = false;

  auto* gen = app.add_subcommand("gen-scenarios", "generate a synthetic scenario corpus");
  gen->add_option("--count", count, "number of scenarios")->capture_default_str();

  auto* pre = app.add_subcommand("pretrain", "behavior cloning with teacher forcing");
  pre->add_option("--scenarios", scenarios, "scenario JSONL file")->required();
  pre->add_option("--iters", iters, "override pretrain.iters");

  auto* fin = app.add_subcommand("finetune", "closed-loop REINFORCE fine-tuning");
  fin->add_option("--scenarios", scenarios, "scenario JSONL file")->required();
  fin->add_option("--from", from, "starting checkpoint");
  fin->add_flag("--from-scratch", from_scratch, "start from a freshly initialized model");
  fin->add_option("--iters", iters, "override finetune.iters");
  fin->add_option("--lambda", lambda, "override finetune.lambda_collision");

  auto* roll = app.add_subcommand("rollout", "sample closed-loop rollouts from a checkpoint");
  roll->add_option("--scenarios", scenarios, "scenario JSONL file")->required();
  roll->add_option("--from", from, "checkpoint")->required();
  roll->add_option("--rollouts", rollouts, "rollouts per scenario (default evaluation.rollouts)");

  auto* evs = app.add_subcommand("eval-sim", "rollout metrics for one sim agent");
  evs->add_option("--scenarios", scenarios, "scenario JSONL file")->required();
  evs->add_option("--sim-agent", sim_agent, "'log' or a checkpoint path")->capture_default_str();

  auto* evp = app.add_subcommand("eval-planners", "rank the planner family under several sim agents");
  evp->add_option("--scenarios", scenarios, "scenario JSONL file")->required();
  evp->add_option("--sim-agents", sim_agents, "comma-separated list of 'log' and checkpoint paths")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  if (app.get_subcommands().empty() && !g.print_config) {
    std::cerr << app.help();
    return 2;
  }

  try {
    RunConfig cfg;
    if (!g.config_path.empty()) apply_json(read_json_file(g.config_path), cfg);
    apply_json(env_overrides(environ), cfg);
    if (*seed_opt) cfg.seed = seed;
    if (iters) (fin->parsed() ? cfg.finetune.iters : cfg.pretrain.iters) = *iters;
    if (lambda) cfg.finetune.reward.lambda_collision = *lambda;
    cfg.validate();
    if (g.print_config) {
      std::cout << to_json(cfg).dump(2) << "\n";
      return 0;
    }
    if (gen->parsed()) return cmd_gen(g, cfg, count);
    if (pre->parsed()) return cmd_pretrain(g, cfg, scenarios);
    if (fin->parsed()) return cmd_finetune(g, cfg, scenarios, from, from_scratch);
    if (roll->parsed()) return cmd_rollout(g, cfg, scenarios, from, rollouts);
    if (evs->parsed()) return cmd_eval_sim(g, cfg, scenarios, sim_agent);
    if (evp->parsed()) return cmd_eval_planners(g, cfg, scenarios, sim_agents);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
