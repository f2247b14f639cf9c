#include "ganno/config_json.hpp"

#include <fstream>

#include "ganno/errors.hpp"

namespace ganno {

void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(context + ": unknown key '" + key + "'");
  }
}

nn::NetworkSpec network_from_json(const Json& j) {
  check_keys(j, {"input", "layers", "num_classes"}, "network");
  nn::NetworkSpec spec;
  std::vector<int> input;
  read(j, "input", input, "network");
  if (input.size() == 1) input = {input[0], 1, 1};
  if (input.size() != 3) throw ConfigError("network.input: expected [c, h, w]");
  spec.input = {input[0], input[1], input[2]};
  read(j, "num_classes", spec.num_classes, "network");
  if (!j.contains("layers") || !j["layers"].is_array()) {
    throw ConfigError("network.layers: expected an array");
  }
  for (const auto& lj : j["layers"]) {
    check_keys(lj, {"kind", "units", "kernel", "activation", "pool"}, "network.layers");
    nn::LayerSpec l;
    std::string kind = "dense", act = "relu";
    read(lj, "kind", kind, "network.layers");
    read(lj, "units", l.units, "network.layers");
    read(lj, "kernel", l.kernel, "network.layers");
    read(lj, "activation", act, "network.layers");
    read(lj, "pool", l.pool, "network.layers");
    l.kind = nn::layer_kind_from_string(kind);
    if (act == "relu") {
      l.activation = nn::Activation::relu;
    } else if (act == "none") {
      l.activation = nn::Activation::none;
    } else {
      throw ConfigError("network.layers.activation: unknown '" + act + "'");
    }
    spec.layers.push_back(l);
  }
  return spec;
}

Json to_json(const nn::NetworkSpec& spec) {
  Json layers = Json::array();
  for (const auto& l : spec.layers) {
    Json lj = {{"kind", nn::to_string(l.kind)},
               {"units", l.units},
               {"activation", l.activation == nn::Activation::relu ? "relu" : "none"}};
    if (l.kind == nn::LayerKind::conv2d) {
      lj["kernel"] = l.kernel;
      lj["pool"] = l.pool;
    }
    layers.push_back(lj);
  }
  return {{"input", {spec.input.channels, spec.input.height, spec.input.width}},
          {"layers", layers},
          {"num_classes", spec.num_classes}};
}

nn::OptimConfig optim_from_json(const Json& j) {
  check_keys(j, {"beta1", "beta2", "epsilon", "optimizer"}, "optim");
  nn::OptimConfig c;
  read(j, "beta1", c.beta1, "optim");
  read(j, "beta2", c.beta2, "optim");
  read(j, "epsilon", c.epsilon, "optim");
  std::string opt = nn::to_string(c.optimizer);
  read(j, "optimizer", opt, "optim");
  c.optimizer = nn::optimizer_kind_from_string(opt);
  c.validate();
  return c;
}

Json to_json(const nn::OptimConfig& c) {
  return {{"beta1", c.beta1},
          {"beta2", c.beta2},
          {"epsilon", c.epsilon},
          {"optimizer", nn::to_string(c.optimizer)}};
}

schedules::ScheduleSpec schedule_from_json(const Json& j) {
  const char* ctx = "schedule";
  check_keys(j, {"kind", "base_lr", "total_steps", "end_fraction", "exp_end_fraction",
                 "piecewise_breakpoints", "piecewise_multipliers", "sgdr_period",
                 "sgdr_multiplier", "sgdr_floor_fraction", "warmup_fraction",
                 "warmup_start_fraction"},
             ctx);
  schedules::ScheduleSpec s;
  std::string kind = schedules::to_string(s.kind);
  read(j, "kind", kind, ctx);
  s.kind = schedules::schedule_kind_from_string(kind);
  read(j, "base_lr", s.base_lr, ctx);
  read(j, "total_steps", s.total_steps, ctx);
  read(j, "end_fraction", s.end_fraction, ctx);
  read(j, "exp_end_fraction", s.exp_end_fraction, ctx);
  read(j, "piecewise_breakpoints", s.piecewise_breakpoints, ctx);
  read(j, "piecewise_multipliers", s.piecewise_multipliers, ctx);
  read(j, "sgdr_period", s.sgdr_period, ctx);
  read(j, "sgdr_multiplier", s.sgdr_multiplier, ctx);
  read(j, "sgdr_floor_fraction", s.sgdr_floor_fraction, ctx);
  read(j, "warmup_fraction", s.warmup_fraction, ctx);
  read(j, "warmup_start_fraction", s.warmup_start_fraction, ctx);
  return s;
}

Json to_json(const schedules::ScheduleSpec& s) {
  return {{"kind", schedules::to_string(s.kind)},
          {"base_lr", s.base_lr},
          {"total_steps", s.total_steps},
          {"end_fraction", s.end_fraction},
          {"exp_end_fraction", s.exp_end_fraction},
          {"piecewise_breakpoints", s.piecewise_breakpoints},
          {"piecewise_multipliers", s.piecewise_multipliers},
          {"sgdr_period", s.sgdr_period},
          {"sgdr_multiplier", s.sgdr_multiplier},
          {"sgdr_floor_fraction", s.sgdr_floor_fraction},
          {"warmup_fraction", s.warmup_fraction},
          {"warmup_start_fraction", s.warmup_start_fraction}};
}

DataConfig data_from_json(const Json& j) {
  const char* ctx = "data";
  check_keys(j, {"source", "root", "max_train", "max_test", "val_fraction", "seed",
                 "blobs", "blob_test_per_class", "fallback_to_blobs"},
             ctx);
  DataConfig c;
  std::string source = to_string(c.source), root;
  read(j, "source", source, ctx);
  c.source = data_source_from_string(source);
  read(j, "root", root, ctx);
  c.root = root;
  read(j, "max_train", c.max_train, ctx);
  read(j, "max_test", c.max_test, ctx);
  read(j, "val_fraction", c.val_fraction, ctx);
  read(j, "seed", c.seed, ctx);
  read(j, "blob_test_per_class", c.blob_test_per_class, ctx);
  read(j, "fallback_to_blobs", c.fallback_to_blobs, ctx);
  if (j.contains("blobs")) {
    const Json& b = j["blobs"];
    const char* bctx = "data.blobs";
    check_keys(b, {"num_classes", "per_class", "dim", "sigma", "separation", "seed",
                   "shape"},
               bctx);
    read(b, "num_classes", c.blobs.num_classes, bctx);
    read(b, "per_class", c.blobs.per_class, bctx);
    read(b, "dim", c.blobs.dim, bctx);
    read(b, "sigma", c.blobs.sigma, bctx);
    read(b, "separation", c.blobs.separation, bctx);
    read(b, "seed", c.blobs.seed, bctx);
    std::vector<int> shape;
    read(b, "shape", shape, bctx);
    if (!shape.empty()) {
      if (shape.size() != 3) throw ConfigError("data.blobs.shape: expected [c, h, w]");
      c.blobs.shape = {shape[0], shape[1], shape[2]};
    }
  }
  return c;
}

Json to_json(const DataConfig& c) {
  const auto& b = c.blobs;
  return {{"source", to_string(c.source)},
          {"root", c.root.string()},
          {"max_train", c.max_train},
          {"max_test", c.max_test},
          {"val_fraction", c.val_fraction},
          {"seed", c.seed},
          {"blob_test_per_class", c.blob_test_per_class},
          {"fallback_to_blobs", c.fallback_to_blobs},
          {"blobs",
           {{"num_classes", b.num_classes},
            {"per_class", b.per_class},
            {"dim", b.dim},
            {"sigma", b.sigma},
            {"separation", b.separation},
            {"seed", b.seed},
            {"shape", {b.shape.channels, b.shape.height, b.shape.width}}}}};
}

env::EnvConfig env_from_json(const Json& j) {
  const char* ctx = "env";
  check_keys(j, {"network", "data", "optim", "tau", "batch_size", "episode_epochs",
                 "lr_init_bounds", "wd_init_bounds", "fixed_lr_init",
                 "fixed_weight_decay", "lr_max", "difference_rewards", "ablation",
                 "reset_train_examples"},
             ctx);
  env::EnvConfig c;
  if (!j.contains("network")) throw ConfigError("env.network is required");
  c.network = network_from_json(j["network"]);
  if (j.contains("data")) c.data = data_from_json(j["data"]);
  if (j.contains("optim")) c.optim = optim_from_json(j["optim"]);
  read(j, "tau", c.tau, ctx);
  read(j, "batch_size", c.batch_size, ctx);
  read(j, "episode_epochs", c.episode_epochs, ctx);
  std::vector<double> bounds;
  read(j, "lr_init_bounds", bounds, ctx);
  if (!bounds.empty()) {
    if (bounds.size() != 2) throw ConfigError("env.lr_init_bounds: expected [low, high]");
    c.lr_init_low = bounds[0];
    c.lr_init_high = bounds[1];
  }
  bounds.clear();
  read(j, "wd_init_bounds", bounds, ctx);
  if (!bounds.empty()) {
    if (bounds.size() != 2) throw ConfigError("env.wd_init_bounds: expected [low, high]");
    c.wd_init_low = bounds[0];
    c.wd_init_high = bounds[1];
  }
  if (j.contains("fixed_lr_init") && !j["fixed_lr_init"].is_null()) {
    double v = 0;
    read(j, "fixed_lr_init", v, ctx);
    c.fixed_lr_init = v;
  }
  if (j.contains("fixed_weight_decay") && !j["fixed_weight_decay"].is_null()) {
    double v = 0;
    read(j, "fixed_weight_decay", v, ctx);
    c.fixed_weight_decay = v;
  }
  read(j, "lr_max", c.lr_max, ctx);
  read(j, "difference_rewards", c.difference_rewards, ctx);
  std::string ablation = env::to_string(c.ablation);
  read(j, "ablation", ablation, ctx);
  c.ablation = env::ablation_mode_from_string(ablation);
  read(j, "reset_train_examples", c.reset_train_examples, ctx);
  c.validate();
  return c;
}

Json to_json(const env::EnvConfig& c) {
  Json j = {{"network", to_json(c.network)},
            {"data", to_json(c.data)},
            {"optim", to_json(c.optim)},
            {"tau", c.tau},
            {"batch_size", c.batch_size},
            {"episode_epochs", c.episode_epochs},
            {"lr_init_bounds", {c.lr_init_low, c.lr_init_high}},
            {"wd_init_bounds", {c.wd_init_low, c.wd_init_high}},
            {"fixed_lr_init", nullptr},
            {"fixed_weight_decay", nullptr},
            {"lr_max", c.lr_max},
            {"difference_rewards", c.difference_rewards},
            {"ablation", env::to_string(c.ablation)},
            {"reset_train_examples", c.reset_train_examples}};
  if (c.fixed_lr_init) j["fixed_lr_init"] = *c.fixed_lr_init;
  if (c.fixed_weight_decay) j["fixed_weight_decay"] = *c.fixed_weight_decay;
  return j;
}

marl::PolicyConfig policy_from_json(const Json& j) {
  const char* ctx = "policy";
  check_keys(j, {"obs_dim", "actor_hidden", "recurrent", "post_recurrent",
                 "critic_hidden", "num_actions", "head_init_scale"},
             ctx);
  marl::PolicyConfig c;
  read(j, "obs_dim", c.obs_dim, ctx);
  read(j, "actor_hidden", c.actor_hidden, ctx);
  read(j, "recurrent", c.recurrent, ctx);
  read(j, "post_recurrent", c.post_recurrent, ctx);
  read(j, "critic_hidden", c.critic_hidden, ctx);
  read(j, "num_actions", c.num_actions, ctx);
  read(j, "head_init_scale", c.head_init_scale, ctx);
  c.validate();
  return c;
}

Json to_json(const marl::PolicyConfig& c) {
  return {{"obs_dim", c.obs_dim},
          {"actor_hidden", c.actor_hidden},
          {"recurrent", c.recurrent},
          {"post_recurrent", c.post_recurrent},
          {"critic_hidden", c.critic_hidden},
          {"num_actions", c.num_actions},
          {"head_init_scale", c.head_init_scale}};
}

marl::PPOConfig ppo_from_json(const Json& j) {
  const char* ctx = "ppo";
  check_keys(j, {"executors", "total_timesteps", "epoch_batch", "sequence_length",
                 "epochs", "minibatches", "gamma", "gae_lambda", "clip", "entropy_coef",
                 "value_coef", "learning_rate", "max_grad_norm", "clip_value",
                 "normalize_advantages", "normalize_values", "normalize_observations",
                 "greedy_eval", "policy"},
             ctx);
  marl::PPOConfig c;
  read(j, "executors", c.executors, ctx);
  read(j, "total_timesteps", c.total_timesteps, ctx);
  read(j, "epoch_batch", c.epoch_batch, ctx);
  read(j, "sequence_length", c.sequence_length, ctx);
  read(j, "epochs", c.epochs, ctx);
  read(j, "minibatches", c.minibatches, ctx);
  read(j, "gamma", c.gamma, ctx);
  read(j, "gae_lambda", c.gae_lambda, ctx);
  read(j, "clip", c.clip, ctx);
  read(j, "entropy_coef", c.entropy_coef, ctx);
  read(j, "value_coef", c.value_coef, ctx);
  read(j, "learning_rate", c.learning_rate, ctx);
  read(j, "max_grad_norm", c.max_grad_norm, ctx);
  read(j, "clip_value", c.clip_value, ctx);
  read(j, "normalize_advantages", c.normalize_advantages, ctx);
  read(j, "normalize_values", c.normalize_values, ctx);
  read(j, "normalize_observations", c.normalize_observations, ctx);
  read(j, "greedy_eval", c.greedy_eval, ctx);
  if (j.contains("policy")) c.policy = policy_from_json(j["policy"]);
  c.validate();
  return c;
}

Json to_json(const marl::PPOConfig& c) {
  return {{"executors", c.executors},
          {"total_timesteps", c.total_timesteps},
          {"epoch_batch", c.epoch_batch},
          {"sequence_length", c.sequence_length},
          {"epochs", c.epochs},
          {"minibatches", c.minibatches},
          {"gamma", c.gamma},
          {"gae_lambda", c.gae_lambda},
          {"clip", c.clip},
          {"entropy_coef", c.entropy_coef},
          {"value_coef", c.value_coef},
          {"learning_rate", c.learning_rate},
          {"max_grad_norm", c.max_grad_norm},
          {"clip_value", c.clip_value},
          {"normalize_advantages", c.normalize_advantages},
          {"normalize_values", c.normalize_values},
          {"normalize_observations", c.normalize_observations},
          {"greedy_eval", c.greedy_eval},
          {"policy", to_json(c.policy)}};
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

}  // namespace ganno
