#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ganno/nn/network.hpp"

namespace ganno::marl {

// Shared actor: MLP -> GRU -> dense -> action logits. Critic: separate MLP
// to a scalar value. One parameter set serves every agent.
struct PolicyConfig {
  int obs_dim = 31;
  std::vector<int> actor_hidden = {128, 128};
  int recurrent = 64;
  int post_recurrent = 64;  // 0 for none
  std::vector<int> critic_hidden = {64, 64};
  int num_actions = 9;
  double head_init_scale = 0.01;  // logits start near uniform

  void validate() const;  // throws ConfigError
  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

// Position of every weight matrix inside PolicyParams::state.layers. The GRU
// is stored as two entries: input-to-hidden and hidden-to-hidden, each with
// gate blocks ordered reset, update, candidate.
struct PolicyLayout {
  explicit PolicyLayout(const PolicyConfig& cfg);

  struct Dense {
    int out = 0;
    int in = 0;
  };
  std::vector<Dense> shapes;  // one per stored layer
  std::vector<int> actor_mlp;
  int gru_x = 0;
  int gru_h = 0;
  int post = -1;
  int head = 0;
  std::vector<int> critic_mlp;
  int value = 0;
};

// Parameters plus the agent optimizer's moments, in the snapshot container.
struct PolicyParams {
  PolicyConfig config;
  nn::NetworkState state;

  friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

PolicyParams init_policy(const PolicyConfig& cfg, std::uint64_t seed);

// Throws ContractViolation when state does not fit config.
void check_policy(const PolicyParams& params);

std::size_t parameter_count(const PolicyParams& params);

using Hidden = std::vector<double>;

// Double-precision copy of the weights for fast repeated evaluation.
class PolicyNet {
 public:
  explicit PolicyNet(const PolicyParams& params);

  const PolicyConfig& config() const { return cfg_; }
  const PolicyLayout& layout() const { return layout_; }

  // One recurrent step. Throws ContractViolation on a dimension mismatch.
  void actor_step(std::span<const double> obs, std::span<const double> hidden,
                  std::vector<double>& logits, Hidden& next) const;

  double value(std::span<const double> obs) const;

  // Recorded forward pass over one sequence, kept for backpropagation.
  struct ActorTape {
    std::vector<std::vector<std::vector<double>>> mlp;  // [step][layer] post-relu
    std::vector<Hidden> h_in;                           // hidden entering each step
    std::vector<std::vector<double>> r, z, n, hn;       // gates; hn = W_hn h + b_hn
    std::vector<Hidden> h_out;
    std::vector<std::vector<double>> post;
    std::vector<std::vector<double>> logits;
  };

  // Runs the actor over `obs` (steps x obs_dim) from h0. Where resets[k] is
  // set the hidden state is zeroed before step k.
  void actor_forward(std::span<const double> obs, std::size_t steps,
                     std::span<const double> h0, std::span<const std::uint8_t> resets,
                     ActorTape& tape) const;

  // Accumulates d(loss)/d(params) given d(loss)/d(logits) (steps x actions).
  void actor_backward(std::span<const double> obs, const ActorTape& tape,
                      std::span<const std::uint8_t> resets,
                      std::span<const double> dlogits, nn::Gradients& grads) const;

  struct CriticTape {
    std::vector<std::vector<double>> acts;
    double value = 0.0;
  };
  double critic_forward(std::span<const double> obs, CriticTape& tape) const;
  void critic_backward(std::span<const double> obs, const CriticTape& tape,
                       double dvalue, nn::Gradients& grads) const;

  // Zero gradients shaped like the parameters.
  nn::Gradients zero_gradients() const;

 private:
  PolicyConfig cfg_;
  PolicyLayout layout_;
  std::vector<std::vector<double>> w_;
  std::vector<std::vector<double>> b_;
};

// Policy entropy of softmax(logits).
double entropy(std::span<const double> logits);

// log softmax(logits)[a].
double log_prob(std::span<const double> logits, int a);

}  // namespace ganno::marl
