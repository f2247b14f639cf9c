#include "ganno/env/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ganno/errors.hpp"
#include "ganno/format.hpp"

namespace ganno::env {

namespace {

double log10_safe(double x) { return std::log10(x + 1e-10); }

double finite_or_zero(double x) { return std::isfinite(x) ? x : 0.0; }

double sample_bounded_log_uniform(Rng& rng, double lo, double hi) {
  return std::clamp(rng.log_uniform(lo, hi), lo, hi);
}

}  // namespace

void EnvConfig::validate() const {
  resolve(network);
  optim.validate();
  if (tau < 1) throw ConfigError("tau must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (episode_epochs < 1) throw ConfigError("episode_epochs must be >= 1");
  if (!(lr_init_low > 0.0 && lr_init_low < lr_init_high)) {
    throw ConfigError("learning-rate bounds must satisfy 0 < low < high");
  }
  if (!(wd_init_low > 0.0 && wd_init_low < wd_init_high)) {
    throw ConfigError("weight-decay bounds must satisfy 0 < low < high");
  }
  if (!(lr_max > 0.0)) throw ConfigError("lr_max must be positive");
  if (fixed_lr_init && !(*fixed_lr_init >= 0.0 && *fixed_lr_init <= lr_max)) {
    throw ConfigError("fixed initial learning rate outside [0, lr_max]");
  }
  if (fixed_weight_decay && !(*fixed_weight_decay >= 0.0)) {
    throw ConfigError("fixed weight decay must be >= 0");
  }
}

InitialConditions sample_initial_conditions(const EnvConfig& cfg,
                                            std::uint64_t seed) {
  Rng rng(derive_seed(seed, 1));
  InitialConditions ic;
  // Both draws are always made so the stream does not depend on overrides.
  ic.lr = sample_bounded_log_uniform(rng, cfg.lr_init_low, cfg.lr_init_high);
  ic.weight_decay =
      sample_bounded_log_uniform(rng, cfg.wd_init_low, cfg.wd_init_high);
  if (cfg.fixed_lr_init) ic.lr = *cfg.fixed_lr_init;
  if (cfg.fixed_weight_decay) ic.weight_decay = *cfg.fixed_weight_decay;
  return ic;
}

BatchSampler::BatchSampler(std::size_t num_examples, std::uint64_t seed)
    : order_(num_examples), cursor_(num_examples), rng_(seed) {
  std::iota(order_.begin(), order_.end(), 0u);
}

std::span<const std::uint32_t> BatchSampler::next(std::size_t size) {
  if (size > order_.size()) {
    throw ConfigError("batch size exceeds the number of training examples");
  }
  if (cursor_ + size > order_.size()) {
    rng_.shuffle(std::span<std::uint32_t>(order_));
    cursor_ = 0;
  }
  const std::span<const std::uint32_t> out(order_.data() + cursor_, size);
  cursor_ += size;
  return out;
}

std::string trace_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream out;
  out << 't';
  const std::size_t n = rows.empty() ? 0 : rows.front().layer_lrs.size();
  for (std::size_t l = 0; l < n; ++l) out << ",lr_" << l;
  out << ",train_loss,val_acc,reward\n";
  for (const auto& r : rows) {
    out << r.t;
    for (double lr : r.layer_lrs) out << ',' << exact(lr);
    out << ',' << exact(r.train_loss) << ',' << exact(r.val_acc) << ','
        << exact(r.reward) << '\n';
  }
  return out.str();
}

Environment::Environment(EnvConfig cfg, std::shared_ptr<const Dataset> data)
    : cfg_(std::move(cfg)), data_(std::move(data)), model_(cfg_.network) {
  cfg_.validate();
  if (!data_) throw ConfigError("environment needs a dataset");
  if (data_->train.shape != cfg_.network.input) {
    throw ConfigError("dataset shape does not match the network input");
  }
  if (data_->num_classes != cfg_.network.num_classes) {
    throw ConfigError("dataset class count does not match the network");
  }
  if (data_->train.size() < static_cast<std::size_t>(cfg_.batch_size)) {
    throw ConfigError("training split smaller than one batch");
  }
  if (data_->val.empty()) throw ConfigError("validation split is empty");
  const double updates = static_cast<double>(cfg_.episode_epochs) *
                         static_cast<double>(data_->train.size()) /
                         static_cast<double>(cfg_.batch_size);
  episode_length_ = static_cast<int>(std::ceil(updates / cfg_.tau - 1e-9));
  episode_length_ = std::max(episode_length_, 1);
  batch_.shape = cfg_.network.input;
  // Not stepable until reset.
  state_.t = episode_length_;
}

int Environment::num_agents() const {
  return cfg_.ablation == AblationMode::single_agent_global ? 1 : num_layers();
}

std::vector<Observation> Environment::reset(std::uint64_t seed) {
  const int n = num_layers();
  EnvState s;
  s.init = sample_initial_conditions(cfg_, seed);
  s.net = nn::init_state(cfg_.network, derive_seed(seed, 2));
  s.sampler = BatchSampler(data_->train.size(), derive_seed(seed, 3));
  s.layer_lrs.assign(static_cast<std::size_t>(n), s.init.lr);
  s.prev_actions.assign(static_cast<std::size_t>(n), kNoOp);

  const std::size_t k = std::min(cfg_.reset_train_examples, data_->train.size());
  s.train_stats = model_.evaluate(s.net, data_->train.view(0, k));
  s.val_stats = model_.evaluate(s.net, data_->val.view());
  nn::Gradients zero(static_cast<std::size_t>(n));
  std::vector<std::vector<double>> no_update(static_cast<std::size_t>(n));
  for (int l = 0; l < n; ++l) {
    zero[l].weights.assign(s.net.layers[l].weights.size(), 0.0);
    no_update[l].assign(s.net.layers[l].weights.size(), 0.0);
  }
  s.layer_stats = nn::layer_stats(s.net, zero, no_update);

  state_ = std::move(s);
  trace_.clear();
  return observations();
}

std::vector<int> Environment::expand(std::span<const int> joint_actions) const {
  if (static_cast<int>(joint_actions.size()) != num_agents()) {
    throw ContractViolation("expected " + std::to_string(num_agents()) +
                            " actions, got " +
                            std::to_string(joint_actions.size()));
  }
  for (int a : joint_actions) {
    if (a < 0 || a >= kNumActions) {
      throw ContractViolation("invalid action index " + std::to_string(a));
    }
  }
  if (num_agents() == num_layers()) {
    return {joint_actions.begin(), joint_actions.end()};
  }
  return std::vector<int>(static_cast<std::size_t>(num_layers()), joint_actions[0]);
}

void Environment::apply_actions(EnvState& s, const std::vector<int>& actions) const {
  for (std::size_t l = 0; l < actions.size(); ++l) {
    s.layer_lrs[l] = apply_action(s.layer_lrs[l], actions[l], cfg_.lr_max);
    s.prev_actions[l] = actions[l];
  }
}

void Environment::run_window(EnvState& s) {
  const Split& train = data_->train;
  const std::size_t width = train.shape.size();
  const auto b = static_cast<std::size_t>(cfg_.batch_size);
  nn::OptimConfig optim = cfg_.optim;
  optim.weight_decay = s.init.weight_decay;

  batch_.inputs.resize(b * width);
  batch_.labels.resize(b);
  double loss_sum = 0.0, acc_sum = 0.0;
  bool finite = true;
  for (int k = 0; k < cfg_.tau; ++k) {
    if (schedule_) {
      const double lr = std::clamp(schedule_(s.updates), 0.0, cfg_.lr_max);
      std::fill(s.layer_lrs.begin(), s.layer_lrs.end(), lr);
    }
    const auto idx = s.sampler.next(b);
    for (std::size_t i = 0; i < b; ++i) {
      std::copy_n(train.inputs.begin() + static_cast<std::ptrdiff_t>(idx[i] * width),
                  width, batch_.inputs.begin() + static_cast<std::ptrdiff_t>(i * width));
      batch_.labels[i] = train.labels[idx[i]];
    }
    const nn::LossStats ls = model_.forward_backward(s.net, batch_.view(), grads_);
    finite = finite && ls.is_finite;
    loss_sum += ls.loss;
    acc_sum += ls.accuracy;
    nn::optimizer_step(s.net, grads_, s.layer_lrs, optim, &record_);
    ++s.updates;
  }
  s.train_stats.loss = loss_sum / cfg_.tau;
  s.train_stats.accuracy = acc_sum / cfg_.tau;
  s.train_stats.is_finite = finite && std::isfinite(s.train_stats.loss);
  s.layer_stats = nn::layer_stats(s.net, grads_, record_);
  s.val_stats = model_.evaluate(s.net, data_->val.view());
}

StepResult Environment::step(std::span<const int> joint_actions) {
  if (done()) throw ContractViolation("step called on a finished episode");
  const std::vector<int> actions = expand(joint_actions);

  StepResult r;
  if (cfg_.difference_rewards) {
    // Both branches start from the same state, including the sampler, so
    // they see the same minibatches.
    EnvState noop = state_;
    apply_actions(state_, actions);
    run_window(state_);
    apply_actions(noop, std::vector<int>(actions.size(), kNoOp));
    run_window(noop);
    r.value_action = state_.val_stats.accuracy;
    r.value_noop = noop.val_stats.accuracy;
    r.reward = r.value_action - r.value_noop;
  } else {
    apply_actions(state_, actions);
    run_window(state_);
    r.value_action = r.value_noop = state_.val_stats.accuracy;
    r.reward = r.value_action;
  }
  state_.t += 1;
  r.done = done();
  r.layer_lrs = state_.layer_lrs;
  r.observations = observations();
  trace_.push_back({state_.t, state_.layer_lrs, state_.train_stats.loss,
                    state_.val_stats.accuracy, r.reward});
  return r;
}

Observation Environment::layer_observation(int layer) const {
  const EnvState& s = state_;
  Observation o{};
  const bool finite = s.train_stats.is_finite && s.val_stats.is_finite &&
                      std::isfinite(s.train_stats.loss) &&
                      std::isfinite(s.val_stats.loss);
  o[obs::kTrainAcc] = finite_or_zero(s.train_stats.accuracy);
  o[obs::kValAcc] = finite_or_zero(s.val_stats.accuracy);
  o[obs::kNonFinite] = finite ? 0.0 : 1.0;
  if (finite) {
    o[obs::kTrainLoss] = s.train_stats.loss;
    o[obs::kValLoss] = s.val_stats.loss;
    o[obs::kLossRatio] =
        s.val_stats.loss > 0.0 ? s.train_stats.loss / s.val_stats.loss : 0.0;
  }
  const double epochs_done = static_cast<double>(s.updates) * cfg_.batch_size /
                             static_cast<double>(data_->train.size());
  o[obs::kProgress] = std::min(1.0, epochs_done / cfg_.episode_epochs);
  o[obs::kInitLr] = log10_safe(s.init.lr);
  o[obs::kInitWd] = log10_safe(s.init.weight_decay);

  const auto l = static_cast<std::size_t>(layer);
  o[obs::kLr] = log10_safe(s.layer_lrs[l]);
  o[obs::kPrevAction + s.prev_actions[l]] = 1.0;
  const nn::LayerKind kind = model_.geometry()[l].kind;
  o[obs::kLayerType + static_cast<int>(kind)] = 1.0;
  const int n = num_layers();
  const int depth = layer == 0 ? 0 : (layer == n - 1 ? 2 : 1);
  o[obs::kDepth + depth] = 1.0;
  const nn::LayerStats& st = s.layer_stats[l];
  o[obs::kTrustRatio] = st.trust_ratio;
  o[obs::kGradNorm] = st.grad_norm;
  o[obs::kUpdateNorm] = st.update_norm;
  o[obs::kWeightMean] = st.weight_mean;
  o[obs::kWeightVar] = st.weight_var;
  o[obs::kWeightNorm] = st.weight_norm;

  bool replaced = false;
  for (double& x : o) {
    if (!std::isfinite(x)) {
      x = 0.0;
      replaced = true;
    }
  }
  if (replaced) o[obs::kNonFinite] = 1.0;
  return o;
}

std::vector<Observation> Environment::observations() const {
  std::vector<Observation> out;
  for (int a = 0; a < num_agents(); ++a) out.push_back(layer_observation(a));
  return out;
}

nn::LossStats Environment::test_stats() {
  if (data_->test.empty()) throw ConfigError("test split is empty");
  return model_.evaluate(state_.net, data_->test.view());
}

}  // namespace ganno::env
