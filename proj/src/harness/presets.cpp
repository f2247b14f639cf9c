#include "ganno/harness/presets.hpp"

#include "ganno/errors.hpp"

namespace ganno::harness {

namespace {

using nn::Activation;
using nn::LayerKind;
using nn::LayerSpec;

LayerSpec dense(int units, bool relu = true) {
  return {LayerKind::dense, units, 3, relu ? Activation::relu : Activation::none, false};
}

LayerSpec conv(int channels, bool pool) {
  return {LayerKind::conv2d, channels, 3, Activation::relu, pool};
}

env::EnvConfig base(DataSource source, nn::Shape input, nn::Shape blob_shape) {
  env::EnvConfig c;
  c.network.input = input;
  c.network.num_classes = 10;
  c.data.source = source;
  c.data.max_train = 10000;
  c.data.max_test = 2000;
  c.data.fallback_to_blobs = true;
  c.data.blobs.num_classes = 10;
  c.data.blobs.per_class = 1000;
  c.data.blobs.dim = static_cast<int>(blob_shape.size());
  c.data.blobs.shape = blob_shape;
  c.data.blobs.sigma = 0.3;
  c.data.blobs.separation = 4.0;
  c.data.blob_test_per_class = 200;
  c.tau = 50;
  c.batch_size = 32;
  c.episode_epochs = 2;
  return c;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"mlp2", "cnn2", "cnn5", "cnn5_cifar10"};
  return names;
}

env::EnvConfig preset(const std::string& name) {
  const nn::Shape fashion{1, 28, 28};
  if (name == "mlp2") {
    env::EnvConfig c = base(DataSource::fashion_mnist, {784, 1, 1}, {32, 1, 1});
    c.network.layers = {dense(64), dense(10, false)};
    return c;
  }
  if (name == "cnn2") {
    env::EnvConfig c = base(DataSource::fashion_mnist, fashion, {1, 8, 8});
    c.network.layers = {conv(8, true), dense(10, false)};
    return c;
  }
  if (name == "cnn5") {
    env::EnvConfig c = base(DataSource::fashion_mnist, fashion, {1, 8, 8});
    c.network.layers = {conv(8, true), conv(16, true), conv(16, false), dense(32),
                        dense(10, false)};
    return c;
  }
  if (name == "cnn5_cifar10") {
    env::EnvConfig c = base(DataSource::cifar10, {3, 32, 32}, {3, 8, 8});
    c.network.layers = {conv(16, true), conv(32, true), conv(32, true), dense(64),
                        dense(10, false)};
    return c;
  }
  throw ConfigError("unknown preset '" + name + "'");
}

env::EnvConfig env_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("environment: expected an object");
  if (!j.contains("preset")) return env_from_json(j);
  std::string name;
  read(j, "preset", name, "environment");
  Json merged = to_json(preset(name));
  Json patch = j;
  patch.erase("preset");
  // Reject typos before merge_patch silently adds them.
  for (const auto& [key, value] : patch.items()) {
    if (!merged.contains(key)) throw ConfigError("environment: unknown key '" + key + "'");
  }
  merged.merge_patch(patch);
  return env_from_json(merged);
}

LoadedEnv load_env(env::EnvConfig cfg) {
  auto data = std::make_shared<const Dataset>(load_dataset(cfg.data));
  const bool fell_back =
      cfg.data.source != DataSource::blobs && data->source.rfind("blobs", 0) == 0;
  if (fell_back) {
    cfg.network.input = data->train.shape;
  }
  return {std::move(cfg), std::move(data)};
}

}  // namespace ganno::harness
