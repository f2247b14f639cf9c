#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ganno/config_json.hpp"
#include "ganno/env/environment.hpp"
#include "ganno/harness/results.hpp"
#include "ganno/marl/trainer.hpp"
#include "ganno/schedules.hpp"

namespace ganno::harness {

enum class Mode { train, evaluate, baseline, ablate };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& name);

// A fixed learning-rate schedule evaluated on the grid. base_lr and
// total_steps are filled in per cell from the initial lr and episode length.
struct Baseline {
  std::string name;
  schedules::ScheduleSpec schedule;
};

struct ExperimentConfig {
  Mode mode = Mode::train;
  env::EnvConfig train_env;
  env::EnvConfig eval_env;  // difference rewards are always off when evaluating
  marl::PPOConfig ppo;

  std::vector<Baseline> baselines;
  bool random_baseline = false;  // uniform random action for every layer
  std::vector<env::AblationMode> ablations = {
      env::AblationMode::full, env::AblationMode::lr_only,
      env::AblationMode::timestep_only, env::AblationMode::single_agent_global};

  std::vector<double> grid_lrs = {1e-4, 3e-4, 1e-3, 3e-3, 1e-2};
  std::vector<double> grid_weight_decays = {0.1, 0.01, 0.0001};
  int seeds = 3;
  std::uint64_t seed = 0;
  std::string metric = "test";  // "test" or "val" final accuracy
  std::filesystem::path policy;  // evaluate mode: a saved policy directory
  int workers = 1;
  bool greedy = true;
  bool write_traces = true;

  void validate() const;  // throws ConfigError
};

// Keys: mode, train_env, eval_env (defaults to train_env), ppo, baselines
// (list of schedule objects with an optional "name"), random_baseline,
// ablations, grid {lrs, weight_decays}, seeds, seed, metric, policy, workers,
// greedy, write_traces.
ExperimentConfig experiment_from_json(const Json& j);
using ganno::to_json;
Json to_json(const ExperimentConfig& cfg);

// Name of the trained method under an observation mask: "ganno",
// "ganno_lr_only", ...
std::string method_name(env::AblationMode mode);

// Streams derived from the base seed for replicate k.
std::uint64_t training_seed(std::uint64_t base, int k);
std::uint64_t episode_seed(std::uint64_t base, int k);

struct EpisodeRecord {
  CellResult cell;
  double final_val_acc = 0.0;
  double final_test_acc = 0.0;
  std::vector<env::TraceRow> trace;
};

struct TrainedAgent {
  std::string method;
  int seed = 0;
  marl::TrainResult result;
};

struct ExperimentResult {
  ResultTable table;
  std::vector<EpisodeRecord> episodes;  // method-major, then lr, wd, seed
  std::vector<TrainedAgent> agents;
};

// Carries the run context (mode, method, cell) of a failure. kind() is the
// class name of the original error.
class RunError : public std::runtime_error {
 public:
  RunError(std::string kind, std::string context, const std::string& message);
  const std::string& kind() const { return kind_; }
  const std::string& context() const { return context_; }

 private:
  std::string kind_;
  std::string context_;
};

// "ConfigError", "LoadError", ... or "Error" for anything else.
std::string error_kind(const std::exception& e);

// Environment used to train under `ablation`: train_env with the mask set and
// difference rewards on.
env::EnvConfig training_env_config(const ExperimentConfig& cfg, env::AblationMode ablation);

// Environment for one evaluation cell: eval_env with the cell's initial
// conditions, difference rewards off, and the mask of a trained method.
env::EnvConfig evaluation_env_config(const ExperimentConfig& cfg, const std::string& method,
                                     double lr, double weight_decay);

// Trains one agent of replicate k under `ablation`.
marl::TrainResult train_agent(const ExperimentConfig& cfg, env::AblationMode ablation,
                              int k, const std::function<void(const marl::TrainLogRow&)>&
                                         on_row = {});

// Evaluates one grid cell in isolation. `policy` is required for trained
// methods and ignored for baselines.
EpisodeRecord run_cell(const ExperimentConfig& cfg, const std::string& method, double lr,
                       double weight_decay, int k,
                       const marl::TrainedPolicy* policy = nullptr);

// Runs the configured mode. With a non-empty `out` it writes config.json,
// results.csv, episodes.csv, traces/, policies/ and train logs there; a
// failing run still leaves the artifacts of the jobs that finished. `log`
// receives progress lines.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::filesystem::path& out = {},
                                const std::function<void(const std::string&)>& log = {});

}  // namespace ganno::harness
