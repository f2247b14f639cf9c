#include "ganno/marl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ganno/errors.hpp"
#include "ganno/nn/optim.hpp"

namespace ganno::marl {

void PPOConfig::validate() const {
  if (executors < 1) throw ConfigError("executors must be >= 1");
  if (total_timesteps < 1) throw ConfigError("total_timesteps must be >= 1");
  if (epoch_batch < 1 || sequence_length < 1 || epochs < 1 || minibatches < 1) {
    throw ConfigError("epoch_batch, sequence_length, epochs and minibatches must be >= 1");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw ConfigError("gae_lambda must be in [0, 1]");
  }
  if (!(clip > 0.0)) throw ConfigError("clip must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(entropy_coef >= 0.0 && value_coef >= 0.0 && max_grad_norm >= 0.0)) {
    throw ConfigError("loss coefficients and max_grad_norm must be >= 0");
  }
  policy.validate();
}

int PPOConfig::rollout_length(int agents) const {
  const int per_round = executors * std::max(agents, 1);
  return sequence_length * ((epoch_batch + per_round - 1) / per_round);
}

namespace {

void check_logits(std::span<const double> logits) {
  if (logits.empty()) throw ContractViolation("empty logits");
  for (double x : logits) {
    if (!std::isfinite(x)) throw ContractViolation("non-finite logits");
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += p[i] = std::exp(logits[i] - mx);
  for (double& x : p) x /= s;
  return p;
}

}  // namespace

Sample sample_action(std::span<const double> logits, Rng& rng) {
  check_logits(logits);
  const std::vector<double> p = softmax(logits);
  const double u = rng.uniform();
  double acc = 0.0;
  int a = static_cast<int>(p.size()) - 1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) {
      a = static_cast<int>(i);
      break;
    }
  }
  // Never return an action with zero probability due to rounding in acc.
  while (p[static_cast<std::size_t>(a)] == 0.0 && a > 0) --a;
  return {a, log_prob(logits, a)};
}

int greedy_action(std::span<const double> logits) {
  check_logits(logits);
  return static_cast<int>(std::max_element(logits.begin(), logits.end()) -
                          logits.begin());
}

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const std::uint8_t> dones, double bootstrap,
                      double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) {
    throw ContractViolation("rewards, values and dones must have equal length");
  }
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = bootstrap;
  double running = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double cont = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * cont - values[t];
    running = delta + gamma * lambda * cont * running;
    out.advantages[t] = running;
    out.returns[t] = running + values[t];
    next_value = values[t];
  }
  return out;
}

void ValueNormalizer::update(std::span<const double> targets) {
  if (targets.empty()) return;
  const double n = static_cast<double>(targets.size());
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
  double m2 = 0.0;
  for (double t : targets) m2 += (t - mean) * (t - mean);
  const double total = count_ + n;
  const double delta = mean - mean_;
  mean_ += delta * n / total;
  m2_ += m2 + delta * delta * count_ * n / total;
  count_ = total;
}

double ValueNormalizer::stddev() const {
  return count_ > 0.0 ? std::sqrt(m2_ / count_ + 1e-8) : 1.0;
}

double ValueNormalizer::normalize(double v) const { return (v - mean_) / stddev(); }

double ValueNormalizer::denormalize(double v) const { return v * stddev() + mean_; }

double clipped_surrogate(double ratio, double advantage, double clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return std::min(ratio * advantage, clipped * advantage);
}

double clipped_surrogate_grad(double ratio, double advantage, double clip) {
  const double clipped = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  return ratio * advantage <= clipped * advantage ? advantage : 0.0;
}

std::vector<double> normalize_advantages(std::span<const double> adv) {
  std::vector<double> out(adv.begin(), adv.end());
  if (out.empty()) return out;
  const double n = static_cast<double>(out.size());
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / n;
  double var = 0.0;
  for (double a : out) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : out) a = (a - mean) / (sd + 1e-8);
  return out;
}

LossParts ppo_loss(const PolicyNet& net, std::span<const Sequence* const> batch,
                   const PPOConfig& cfg, nn::Gradients* grads) {
  const auto d = static_cast<std::size_t>(net.config().obs_dim);
  const auto A = static_cast<std::size_t>(net.config().num_actions);
  std::size_t total = 0;
  std::vector<double> adv;
  for (const Sequence* s : batch) {
    total += s->size();
    adv.insert(adv.end(), s->advantages.begin(), s->advantages.end());
  }
  if (total == 0) throw ContractViolation("empty PPO minibatch");
  if (cfg.normalize_advantages) adv = normalize_advantages(adv);
  const double inv_n = 1.0 / static_cast<double>(total);

  LossParts lp;
  PolicyNet::ActorTape tape;
  PolicyNet::CriticTape ctape;
  std::vector<double> dlogits;
  std::size_t offset = 0;
  std::size_t clipped = 0;
  for (const Sequence* s : batch) {
    const std::size_t steps = s->size();
    if (s->obs.size() != steps * d || s->old_log_probs.size() != steps ||
        s->old_values.size() != steps || s->targets.size() != steps ||
        s->resets.size() != steps) {
      throw ContractViolation("sequence arrays have inconsistent lengths");
    }
    net.actor_forward(s->obs, steps, s->h0, s->resets, tape);
    dlogits.assign(steps * A, 0.0);
    for (std::size_t k = 0; k < steps; ++k) {
      const auto& logits = tape.logits[k];
      const int a = s->actions[k];
      const double lpa = log_prob(logits, a);
      const double ratio = std::exp(lpa - s->old_log_probs[k]);
      const double ak = adv[offset + k];
      lp.policy_loss -= clipped_surrogate(ratio, ak, cfg.clip) * inv_n;
      if (std::abs(ratio - 1.0) > cfg.clip) ++clipped;
      const double h = entropy(logits);
      lp.entropy += h * inv_n;
      if (grads) {
        const std::vector<double> p = softmax(logits);
        const double g = clipped_surrogate_grad(ratio, ak, cfg.clip) * ratio;
        for (std::size_t j = 0; j < A; ++j) {
          const double onehot = static_cast<int>(j) == a ? 1.0 : 0.0;
          double dl = -g * (onehot - p[j]) * inv_n;
          if (p[j] > 0.0) {
            dl += cfg.entropy_coef * p[j] * (std::log(p[j]) + h) * inv_n;
          }
          dlogits[k * A + j] = dl;
        }
      }

      const std::span<const double> o(s->obs.data() + k * d, d);
      const double v = net.critic_forward(o, ctape);
      const double t = s->targets[k];
      const double old = s->old_values[k];
      double vl = 0.5 * (v - t) * (v - t);
      double dv = v - t;
      if (cfg.clip_value) {
        const double diff = std::clamp(v - old, -cfg.clip, cfg.clip);
        const double vc = old + diff;
        const double vlc = 0.5 * (vc - t) * (vc - t);
        if (vlc > vl) {
          vl = vlc;
          dv = std::abs(v - old) < cfg.clip ? vc - t : 0.0;
        }
      }
      lp.value_loss += vl * inv_n;
      if (grads) net.critic_backward(o, ctape, cfg.value_coef * dv * inv_n, *grads);
    }
    if (grads) net.actor_backward(s->obs, tape, s->resets, dlogits, *grads);
    offset += steps;
  }
  lp.clip_fraction = static_cast<double>(clipped) * inv_n;
  lp.total = lp.policy_loss + cfg.value_coef * lp.value_loss -
             cfg.entropy_coef * lp.entropy;
  return lp;
}

UpdateStats ppo_update(PolicyParams& params, const std::vector<Sequence>& data,
                       const PPOConfig& cfg, Rng& rng) {
  UpdateStats stats;
  if (data.empty()) return stats;
  const std::vector<double> lrs(params.state.layers.size(), cfg.learning_rate);
  const nn::OptimConfig adam;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const auto parts = static_cast<std::size_t>(
      std::min<std::size_t>(static_cast<std::size_t>(cfg.minibatches), data.size()));
  int applied = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t m = 0; m < parts; ++m) {
      const std::size_t first = m * data.size() / parts;
      const std::size_t last = (m + 1) * data.size() / parts;
      std::vector<const Sequence*> batch;
      for (std::size_t i = first; i < last; ++i) batch.push_back(&data[order[i]]);

      const PolicyNet net(params);
      nn::Gradients grads = net.zero_gradients();
      const LossParts lp = ppo_loss(net, batch, cfg, &grads);
      double sq = 0.0;
      for (const auto& g : grads) {
        for (double x : g.weights) sq += x * x;
        for (double x : g.bias) sq += x * x;
      }
      if (!std::isfinite(lp.total) || !std::isfinite(sq)) {
        ++stats.skipped;
        continue;
      }
      const double norm = std::sqrt(sq);
      if (cfg.max_grad_norm > 0.0 && norm > cfg.max_grad_norm) {
        const double scale = cfg.max_grad_norm / norm;
        for (auto& g : grads) {
          for (double& x : g.weights) x *= scale;
          for (double& x : g.bias) x *= scale;
        }
      }
      nn::adam_step(params.state, grads, lrs, adam);
      stats.loss.policy_loss += lp.policy_loss;
      stats.loss.value_loss += lp.value_loss;
      stats.loss.entropy += lp.entropy;
      stats.loss.total += lp.total;
      stats.loss.clip_fraction += lp.clip_fraction;
      ++applied;
    }
  }
  if (applied > 0) {
    const double k = 1.0 / applied;
    stats.loss.policy_loss *= k;
    stats.loss.value_loss *= k;
    stats.loss.entropy *= k;
    stats.loss.total *= k;
    stats.loss.clip_fraction *= k;
  }
  return stats;
}

}  // namespace ganno::marl
