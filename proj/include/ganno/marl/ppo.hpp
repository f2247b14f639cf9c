#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ganno/marl/policy.hpp"
#include "ganno/random.hpp"

namespace ganno::marl {

struct PPOConfig {
  int executors = 4;
  std::int64_t total_timesteps = 50000;  // environment steps over all executors
  int epoch_batch = 32;                  // agent sequences per update
  int sequence_length = 8;
  int epochs = 2;
  int minibatches = 4;

  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  double entropy_coef = 0.01;
  double value_coef = 0.5;
  double learning_rate = 3e-4;
  double max_grad_norm = 0.5;  // 0 disables clipping

  bool clip_value = true;
  bool normalize_advantages = true;
  bool normalize_values = true;
  bool normalize_observations = true;
  bool greedy_eval = true;

  PolicyConfig policy;

  void validate() const;  // throws ConfigError

  // Steps each executor collects per update so that the update sees at least
  // epoch_batch sequences: sequence_length * ceil(epoch_batch / (executors * agents)).
  int rollout_length(int agents) const;
};

// Softmax-categorical draw. Throws ContractViolation on non-finite logits.
struct Sample {
  int action = 0;
  double log_prob = 0.0;
};
Sample sample_action(std::span<const double> logits, Rng& rng);
int greedy_action(std::span<const double> logits);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;  // advantages + values
};

// Generalized advantage estimation. dones[t] != 0 means the episode ended
// after step t (no bootstrap across it); `bootstrap` is V(s_T) for a rollout
// cut mid-episode. Throws ContractViolation on length mismatch.
GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, double bootstrap,
                      double gamma, double lambda);

// Running mean/variance of value targets.
class ValueNormalizer {
 public:
  void update(std::span<const double> targets);
  double normalize(double v) const;
  double denormalize(double v) const;
  double mean() const { return mean_; }
  double stddev() const;

  friend bool operator==(const ValueNormalizer&, const ValueNormalizer&) = default;

 private:
  double count_ = 0.0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

// One training sequence of one agent.
struct Sequence {
  std::vector<double> obs;  // steps x obs_dim, as fed to the policy
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> old_values;  // critic output at collection, normalized space
  std::vector<double> advantages;
  std::vector<double> targets;  // normalized space
  std::vector<std::uint8_t> resets;  // hidden zeroed before this step
  Hidden h0;

  std::size_t size() const { return actions.size(); }
};

struct LossParts {
  double policy_loss = 0.0;  // negative clipped surrogate
  double value_loss = 0.0;
  double entropy = 0.0;      // mean over steps
  double total = 0.0;
  double clip_fraction = 0.0;
};

// Clipped surrogate for one step: min(r A, clip(r, 1-eps, 1+eps) A).
double clipped_surrogate(double ratio, double advantage, double clip);
// d surrogate / d ratio: advantage when the unclipped term is active, else 0.
double clipped_surrogate_grad(double ratio, double advantage, double clip);

// Normalizes advantages to mean 0 / std 1 with a small guard; constant
// advantages all map to 0.
std::vector<double> normalize_advantages(std::span<const double> adv);

// Loss of one minibatch and, when grads is non-null, its gradient.
LossParts ppo_loss(const PolicyNet& net, std::span<const Sequence* const> batch,
                   const PPOConfig& cfg, nn::Gradients* grads);

struct UpdateStats {
  LossParts loss;  // averaged over minibatches
  int skipped = 0;  // minibatches with a non-finite loss
};

// Epochs x minibatches of clipped-PPO updates with Adam on the policy
// moments. Sequences are shuffled with `rng`.
UpdateStats ppo_update(PolicyParams& params, const std::vector<Sequence>& data,
                       const PPOConfig& cfg, Rng& rng);

}  // namespace ganno::marl
