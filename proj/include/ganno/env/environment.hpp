#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ganno/data/datasets.hpp"
#include "ganno/env/actions.hpp"
#include "ganno/env/observation.hpp"
#include "ganno/nn/network.hpp"
#include "ganno/nn/optim.hpp"
#include "ganno/random.hpp"

namespace ganno::env {

struct EnvConfig {
  nn::NetworkSpec network;
  DataConfig data;
  nn::OptimConfig optim;
  int tau = 100;         // gradient updates per environment step
  int batch_size = 32;
  int episode_epochs = 10;

  // Log-uniform initial-condition distributions, replaced by the fixed
  // values when those are set (evaluation).
  double lr_init_low = 1e-5;
  double lr_init_high = 1e-2;
  double wd_init_low = 1e-5;
  double wd_init_high = 1e-1;
  std::optional<double> fixed_lr_init;
  std::optional<double> fixed_weight_decay;

  double lr_max = 1.0;
  bool difference_rewards = true;
  AblationMode ablation = AblationMode::full;

  // Train examples evaluated at reset, before any minibatch statistics exist.
  std::size_t reset_train_examples = 1000;

  void validate() const;  // throws ConfigError
};

struct InitialConditions {
  double lr = 0.0;
  double weight_decay = 0.0;
};

// The draw reset() makes for `seed`; values lie within the configured bounds.
InitialConditions sample_initial_conditions(const EnvConfig& cfg,
                                            std::uint64_t seed);

// Epoch-wise shuffled minibatches; the remainder of an epoch is dropped.
class BatchSampler {
 public:
  BatchSampler() = default;
  BatchSampler(std::size_t num_examples, std::uint64_t seed);

  // Indices of the next `size` examples.
  std::span<const std::uint32_t> next(std::size_t size);

  friend bool operator==(const BatchSampler&, const BatchSampler&) = default;

 private:
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

struct EnvState {
  nn::NetworkState net;
  std::vector<double> layer_lrs;
  InitialConditions init;
  int t = 0;
  std::vector<int> prev_actions;  // per layer
  BatchSampler sampler;
  std::int64_t updates = 0;       // gradient updates on the continuing branch
  std::vector<nn::LayerStats> layer_stats;
  nn::LossStats train_stats;      // mean over the last window's minibatches
  nn::LossStats val_stats;
};

struct StepResult {
  std::vector<Observation> observations;  // raw, one per agent
  double reward = 0.0;
  bool done = false;
  double value_action = 0.0;  // validation accuracy after the chosen actions
  double value_noop = 0.0;    // after the all-no-op branch; equals value_action
                              // when difference rewards are off
  std::vector<double> layer_lrs;
};

struct TraceRow {
  int t = 0;
  std::vector<double> layer_lrs;
  double train_loss = 0.0;
  double val_acc = 0.0;
  double reward = 0.0;
};

// Columns t, lr_0..lr_{N-1}, train_loss, val_acc, reward.
std::string trace_csv(const std::vector<TraceRow>& rows);

// What a multi-agent learner needs from an environment.
class MultiAgentEnv {
 public:
  virtual ~MultiAgentEnv() = default;
  virtual int num_agents() const = 0;
  virtual AblationMode ablation() const { return AblationMode::full; }
  virtual std::vector<Observation> reset(std::uint64_t seed) = 0;
  virtual StepResult step(std::span<const int> joint_actions) = 0;
};

// One supervised training run seen as a multi-agent episode. Not
// thread-safe; each worker owns its own instance. The dataset is shared
// read-only.
class Environment : public MultiAgentEnv {
 public:
  Environment(EnvConfig cfg, std::shared_ptr<const Dataset> data);

  const EnvConfig& config() const { return cfg_; }
  const Dataset& dataset() const { return *data_; }
  int num_layers() const { return static_cast<int>(model_.num_layers()); }
  int num_agents() const override;
  AblationMode ablation() const override { return cfg_.ablation; }
  int episode_length() const { return episode_length_; }
  bool done() const { return state_.t >= episode_length_; }
  const EnvState& state() const { return state_; }
  const std::vector<TraceRow>& trace() const { return trace_; }

  std::vector<Observation> reset(std::uint64_t seed) override;

  // One action per agent; with single_agent_global the single action is
  // applied to every layer. Throws ContractViolation when the episode is
  // done, the count is wrong or an index is invalid.
  StepResult step(std::span<const int> joint_actions) override;

  std::vector<Observation> observations() const;

  // Test-split loss/accuracy of the current network.
  nn::LossStats test_stats();

  // Overrides every layer's rate before each gradient update with
  // schedule(update index within the episode). Used to run handcrafted
  // schedules through the same training loop.
  using LrSchedule = std::function<double(std::int64_t)>;
  void set_lr_schedule(LrSchedule schedule) { schedule_ = std::move(schedule); }

 private:
  std::vector<int> expand(std::span<const int> joint_actions) const;
  void apply_actions(EnvState& s, const std::vector<int>& actions) const;
  void run_window(EnvState& s);
  Observation layer_observation(int layer) const;

  EnvConfig cfg_;
  std::shared_ptr<const Dataset> data_;
  nn::Model model_;
  int episode_length_ = 0;
  EnvState state_;
  std::vector<TraceRow> trace_;
  LrSchedule schedule_;

  // Scratch buffers reused across updates.
  Split batch_;
  nn::Gradients grads_;
  nn::StepRecord record_;
};

}  // namespace ganno::env
