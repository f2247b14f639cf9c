#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "ganno/config_json.hpp"
#include "ganno/data/datasets.hpp"
#include "ganno/env/environment.hpp"

namespace ganno::harness {

// Desk-scale environments. Every file-backed preset falls back to synthetic
// blobs when its dataset is not on disk.
//   mlp2          Fashion-MNIST, dense 64 -> 10
//   cnn2          Fashion-MNIST, conv 8 (pool) -> dense 10
//   cnn5          Fashion-MNIST, three convs -> dense 32 -> dense 10
//   cnn5_cifar10  CIFAR-10, three convs -> dense 64 -> dense 10
const std::vector<std::string>& preset_names();
env::EnvConfig preset(const std::string& name);  // throws ConfigError

// An environment section: either a full EnvConfig object or {"preset": name}
// plus any keys to override (nested objects are merged).
env::EnvConfig env_config_from_json(const Json& j);

struct LoadedEnv {
  env::EnvConfig config;
  std::shared_ptr<const Dataset> data;
};

// Loads the dataset. When blobs stood in for a missing file source, the
// network input is switched to the blob shape so the preset still runs.
LoadedEnv load_env(env::EnvConfig cfg);

}  // namespace ganno::harness
