#pragma once

#include <memory>

#include "ganno/data/datasets.hpp"
#include "ganno/env/environment.hpp"

namespace ganno::test {

inline nn::NetworkSpec mlp(int in, int hidden, int classes) {
  return {{in, 1, 1},
          {{nn::LayerKind::dense, hidden, 3, nn::Activation::relu, false},
           {nn::LayerKind::dense, classes, 3, nn::Activation::none, false}},
          classes};
}

// Small dense network with `depth` trainable layers.
inline nn::NetworkSpec deep_mlp(int in, int hidden, int classes, int depth) {
  nn::NetworkSpec s{{in, 1, 1}, {}, classes};
  for (int i = 0; i + 1 < depth; ++i) {
    s.layers.push_back({nn::LayerKind::dense, hidden, 3, nn::Activation::relu, false});
  }
  s.layers.push_back({nn::LayerKind::dense, classes, 3, nn::Activation::none, false});
  return s;
}

inline env::EnvConfig tiny_env_config(int depth = 2) {
  env::EnvConfig c;
  c.network = deep_mlp(8, 16, 4, depth);
  c.data.blobs.num_classes = 4;
  c.data.blobs.per_class = 50;
  c.data.blobs.dim = 8;
  c.data.blobs.sigma = 0.2;
  c.data.blobs.separation = 3.0;
  c.data.blob_test_per_class = 20;
  c.tau = 5;
  c.batch_size = 8;
  c.episode_epochs = 2;
  return c;
}

inline std::shared_ptr<const Dataset> load(const env::EnvConfig& c) {
  return std::make_shared<const Dataset>(load_dataset(c.data));
}

}  // namespace ganno::test
