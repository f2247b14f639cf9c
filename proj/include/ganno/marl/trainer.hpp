#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ganno/env/environment.hpp"
#include "ganno/marl/policy.hpp"
#include "ganno/marl/ppo.hpp"

namespace ganno::marl {

// Everything needed to act with a trained policy.
struct TrainedPolicy {
  PolicyParams params;
  env::ObservationNormalizer normalizer;
  bool normalize_observations = true;

  friend bool operator==(const TrainedPolicy&, const TrainedPolicy&) = default;
};

// Writes policy.bin (snapshot format) and policy.json (config and
// observation statistics) into `dir`.
void save_policy(const TrainedPolicy& policy, const std::filesystem::path& dir);
TrainedPolicy load_policy(const std::filesystem::path& dir);

struct TrainLogRow {
  std::int64_t timestep = 0;  // total environment steps after the update
  int episode = 0;
  double mean_reward = 0.0;
  double val_acc = 0.0;  // at the end of the episode
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

// Header: timestep,episode,mean_reward,mean_val_acc,policy_loss,value_loss,entropy
std::string train_log_csv(const std::vector<TrainLogRow>& rows);

using EnvFactory = std::function<std::unique_ptr<env::MultiAgentEnv>(int executor)>;

struct TrainResult {
  TrainedPolicy policy;
  std::vector<TrainLogRow> log;
  std::int64_t timesteps = 0;
  int updates = 0;
  int skipped_minibatches = 0;
};

// Synchronous IPPO: each round the executors (one thread each) collect
// rollouts with a frozen copy of the policy, then the learner updates it.
// `on_row` sees every log row as soon as its round finishes, so callers can
// persist a partial log if a later round throws.
TrainResult train(const EnvFactory& make_env, const PPOConfig& cfg, std::uint64_t seed,
                  const std::function<void(const TrainLogRow&)>& on_row = {});

// Chooses one action per agent each step.
class Controller {
 public:
  virtual ~Controller() = default;
  virtual void reset(int agents, env::AblationMode mode) = 0;
  virtual std::vector<int> act(const std::vector<env::Observation>& obs) = 0;
};

class PolicyController : public Controller {
 public:
  PolicyController(const TrainedPolicy& policy, bool greedy, std::uint64_t seed);
  void reset(int agents, env::AblationMode mode) override;
  std::vector<int> act(const std::vector<env::Observation>& obs) override;

 private:
  const TrainedPolicy& policy_;
  PolicyNet net_;
  bool greedy_;
  Rng rng_;
  env::AblationMode mode_ = env::AblationMode::full;
  std::vector<Hidden> hidden_;
};

class NoOpController : public Controller {
 public:
  void reset(int, env::AblationMode) override {}
  std::vector<int> act(const std::vector<env::Observation>& obs) override;
};

// Independent uniform action per agent per step.
class RandomController : public Controller {
 public:
  explicit RandomController(std::uint64_t seed) : rng_(seed) {}
  void reset(int, env::AblationMode) override {}
  std::vector<int> act(const std::vector<env::Observation>& obs) override;

 private:
  Rng rng_;
};

struct EpisodeResult {
  std::uint64_t seed = 0;
  std::vector<double> rewards;
  double final_val_acc = 0.0;
  double final_test_acc = 0.0;
  std::vector<env::TraceRow> trace;
};

EpisodeResult run_episode(env::Environment& environment, Controller& controller,
                          std::uint64_t seed);

// Rolls the policy out on an evaluation-mode environment (difference rewards
// off) once per seed. The policy is never modified. Throws ContractViolation
// if the environment still computes difference rewards.
std::vector<EpisodeResult> evaluate_policy(const TrainedPolicy& policy,
                                           env::Environment& environment,
                                           const std::vector<std::uint64_t>& seeds,
                                           bool greedy = true);

// Normalizes (when enabled) and then masks raw observations, as the policy
// sees them.
env::Observation prepare_observation(const env::Observation& raw,
                                     const env::ObservationNormalizer& normalizer,
                                     bool normalize, env::AblationMode mode);

}  // namespace ganno::marl
