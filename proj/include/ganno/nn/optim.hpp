#pragma once

#include <span>
#include <string>
#include <vector>

#include "ganno/nn/network.hpp"

namespace ganno::nn {

enum class OptimizerKind { adam, lamb };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& name);

// Weight decay is decoupled: it is applied to weights outside the moment
// estimates and never to biases.
struct OptimConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  OptimizerKind optimizer = OptimizerKind::adam;

  void validate() const;  // throws ConfigError
};

// Per-layer record of one optimizer step, in double precision.
struct LayerUpdate {
  // u_l = m_hat / (sqrt(v_hat) + eps) + weight_decay * theta, over weights.
  std::vector<double> direction;
  // Step subtracted from the weights and biases before rounding to float.
  std::vector<double> weight_step;
  std::vector<double> bias_step;
  double trust_ratio = 0.0;  // only meaningful for LAMB
};
using StepRecord = std::vector<LayerUpdate>;

// Bias-corrected Adam with a separate learning rate per layer. Increments
// state.step. Throws ConfigError when per_layer_lr does not have one entry
// per layer, any rate is negative, or gradients do not match the state.
void adam_step(NetworkState& state, const Gradients& grads,
               std::span<const double> per_layer_lr, const OptimConfig& cfg,
               StepRecord* record = nullptr);

// LAMB: each layer's weight direction u_l is rescaled by ||theta_l||/||u_l||
// (zero when ||u_l|| = 0) before the layer rate is applied. Biases take a
// plain Adam step.
void lamb_step(NetworkState& state, const Gradients& grads,
               std::span<const double> per_layer_lr, const OptimConfig& cfg,
               StepRecord* record = nullptr);

// Dispatches on cfg.optimizer.
void optimizer_step(NetworkState& state, const Gradients& grads,
                    std::span<const double> per_layer_lr,
                    const OptimConfig& cfg, StepRecord* record = nullptr);

// Sentinel reported when the update norm is zero.
inline constexpr double kTrustRatioSentinel = 0.0;

double trust_ratio(double weight_norm, double update_norm);

struct LayerStats {
  double weight_mean = 0.0;
  double weight_var = 0.0;  // population variance
  double weight_norm = 0.0;
  double grad_norm = 0.0;
  double update_norm = 0.0;
  double trust_ratio = 0.0;
};

// Statistics over each layer's weight tensor. `updates` holds the update
// direction u_l for every layer (LayerUpdate::direction).
std::vector<LayerStats> layer_stats(const NetworkState& state,
                                    const Gradients& grads,
                                    const std::vector<std::vector<double>>& updates);

std::vector<LayerStats> layer_stats(const NetworkState& state,
                                    const Gradients& grads,
                                    const StepRecord& record);

}  // namespace ganno::nn
