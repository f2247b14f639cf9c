#include "ganno/nn/optim.hpp"

#include <cmath>

#include "ganno/errors.hpp"

namespace ganno::nn {

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::adam ? "adam" : "lamb";
}

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "lamb") return OptimizerKind::lamb;
  throw ConfigError("unknown optimizer '" + name + "'");
}

void OptimConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
}

double trust_ratio(double weight_norm, double update_norm) {
  return update_norm > 0.0 ? weight_norm / update_norm : kTrustRatioSentinel;
}

namespace {

void check_inputs(const NetworkState& state, const Gradients& grads,
                  std::span<const double> lrs, const OptimConfig& cfg) {
  cfg.validate();
  if (lrs.size() != state.layers.size()) {
    throw ConfigError("expected " + std::to_string(state.layers.size()) +
                      " per-layer learning rates, got " +
                      std::to_string(lrs.size()));
  }
  if (grads.size() != state.layers.size()) {
    throw ConfigError("gradient count does not match the layer count");
  }
  for (std::size_t l = 0; l < lrs.size(); ++l) {
    if (!(lrs[l] >= 0.0)) {
      throw ConfigError("learning rate of layer " + std::to_string(l) +
                        " must be >= 0");
    }
    if (grads[l].weights.size() != state.layers[l].weights.size() ||
        grads[l].bias.size() != state.layers[l].bias.size()) {
      throw ConfigError("gradient shapes of layer " + std::to_string(l) +
                        " do not match the state");
    }
  }
}

// Updates the moments in place and writes m_hat / (sqrt(v_hat) + eps).
void adam_direction(std::vector<float>& m, std::vector<float>& v,
                    const std::vector<double>& g, const OptimConfig& cfg,
                    double bc1, double bc2, std::vector<double>& out) {
  out.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    m[i] = static_cast<float>(mi);
    v[i] = static_cast<float>(vi);
    out[i] = (mi / bc1) / (std::sqrt(vi / bc2) + cfg.epsilon);
  }
}

double norm(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double norm(const std::vector<float>& x) {
  double s = 0.0;
  for (float v : x) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

void apply(std::vector<float>& theta, const std::vector<double>& step) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta[i] = static_cast<float>(static_cast<double>(theta[i]) - step[i]);
  }
}

void step_impl(NetworkState& state, const Gradients& grads,
               std::span<const double> lrs, const OptimConfig& cfg,
               bool lamb, StepRecord* record) {
  check_inputs(state, grads, lrs, cfg);
  const double t = static_cast<double>(state.step + 1);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);

  StepRecord local;
  StepRecord& rec = record ? *record : local;
  rec.resize(state.layers.size());
  for (std::size_t l = 0; l < state.layers.size(); ++l) {
    LayerParams& p = state.layers[l];
    LayerUpdate& u = rec[l];
    const double lr = lrs[l];

    adam_direction(p.m_weights, p.v_weights, grads[l].weights, cfg, bc1, bc2,
                   u.direction);
    for (std::size_t i = 0; i < p.weights.size(); ++i) {
      u.direction[i] += cfg.weight_decay * static_cast<double>(p.weights[i]);
    }
    u.trust_ratio = trust_ratio(norm(p.weights), norm(u.direction));
    const double scale = lamb ? lr * u.trust_ratio : lr;
    u.weight_step.resize(u.direction.size());
    for (std::size_t i = 0; i < u.direction.size(); ++i) {
      u.weight_step[i] = scale * u.direction[i];
    }

    adam_direction(p.m_bias, p.v_bias, grads[l].bias, cfg, bc1, bc2,
                   u.bias_step);
    for (double& s : u.bias_step) s *= lr;

    apply(p.weights, u.weight_step);
    apply(p.bias, u.bias_step);
  }
  state.step += 1;
}

}  // namespace

void adam_step(NetworkState& state, const Gradients& grads,
               std::span<const double> per_layer_lr, const OptimConfig& cfg,
               StepRecord* record) {
  step_impl(state, grads, per_layer_lr, cfg, false, record);
}

void lamb_step(NetworkState& state, const Gradients& grads,
               std::span<const double> per_layer_lr, const OptimConfig& cfg,
               StepRecord* record) {
  step_impl(state, grads, per_layer_lr, cfg, true, record);
}

void optimizer_step(NetworkState& state, const Gradients& grads,
                    std::span<const double> per_layer_lr,
                    const OptimConfig& cfg, StepRecord* record) {
  step_impl(state, grads, per_layer_lr, cfg,
            cfg.optimizer == OptimizerKind::lamb, record);
}

std::vector<LayerStats> layer_stats(
    const NetworkState& state, const Gradients& grads,
    const std::vector<std::vector<double>>& updates) {
  if (grads.size() != state.layers.size() ||
      updates.size() != state.layers.size()) {
    throw ConfigError("layer_stats: gradients/updates do not match the state");
  }
  std::vector<LayerStats> out(state.layers.size());
  for (std::size_t l = 0; l < state.layers.size(); ++l) {
    const auto& w = state.layers[l].weights;
    if (grads[l].weights.size() != w.size() || updates[l].size() != w.size()) {
      throw ConfigError("layer_stats: shape mismatch in layer " +
                        std::to_string(l));
    }
    LayerStats& s = out[l];
    if (!w.empty()) {
      double sum = 0.0;
      for (float v : w) sum += v;
      s.weight_mean = sum / static_cast<double>(w.size());
      double var = 0.0;
      for (float v : w) {
        const double d = static_cast<double>(v) - s.weight_mean;
        var += d * d;
      }
      s.weight_var = var / static_cast<double>(w.size());
    }
    s.weight_norm = norm(w);
    s.grad_norm = norm(grads[l].weights);
    s.update_norm = norm(updates[l]);
    s.trust_ratio = trust_ratio(s.weight_norm, s.update_norm);
  }
  return out;
}

std::vector<LayerStats> layer_stats(const NetworkState& state,
                                    const Gradients& grads,
                                    const StepRecord& record) {
  std::vector<std::vector<double>> updates;
  updates.reserve(record.size());
  for (const auto& r : record) updates.push_back(r.direction);
  return layer_stats(state, grads, updates);
}

}  // namespace ganno::nn
