#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ganno {
struct Split;
}

namespace ganno::nn {

enum class LayerKind { dense, conv2d, attention };
enum class Activation { none, relu };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

// Channel-major (C, H, W) shape. Flat feature vectors use (n, 1, 1).
struct Shape {
  int channels = 1;
  int height = 1;
  int width = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int units = 0;  // output features (dense) or output channels (conv2d)
  int kernel = 3;  // conv2d only; stride 1, same padding
  Activation activation = Activation::relu;
  bool pool = false;  // conv2d only; 2x2 max-pool after the activation
};

// Feed-forward classifier trained with softmax cross-entropy.
struct NetworkSpec {
  Shape input;
  std::vector<LayerSpec> layers;
  int num_classes = 0;
};

// Shapes of one trainable layer after resolving the flattening rules.
struct LayerGeometry {
  LayerKind kind = LayerKind::dense;
  Shape in;
  Shape out;     // before pooling
  Shape pooled;  // equals `out` when the layer does not pool
  int kernel = 0;
  bool relu = false;
  bool pool = false;
  std::size_t weight_count = 0;
  std::size_t bias_count = 0;
};

// Throws ConfigError if adjacent shapes do not compose, the network has no
// trainable layer, uses the reserved attention kind, or the final layer width
// differs from num_classes.
std::vector<LayerGeometry> resolve(const NetworkSpec& spec);

// Parameters and optimizer moments of one trainable layer. Stored as 32-bit
// floats; all arithmetic on them is carried out in double.
struct LayerParams {
  std::vector<float> weights;
  std::vector<float> bias;
  std::vector<float> m_weights;
  std::vector<float> m_bias;
  std::vector<float> v_weights;
  std::vector<float> v_bias;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct NetworkState {
  std::vector<LayerParams> layers;
  std::uint64_t step = 0;

  friend bool operator==(const NetworkState&, const NetworkState&) = default;
};

// He-uniform weights for relu layers, Glorot-uniform otherwise; zero biases
// and moments.
NetworkState init_state(const NetworkSpec& spec, std::uint64_t seed);

// Throws ConfigError unless every array of `state` matches `spec`.
void check_state(const NetworkSpec& spec, const NetworkState& state);

struct LayerGrads {
  std::vector<double> weights;
  std::vector<double> bias;
};
using Gradients = std::vector<LayerGrads>;

struct LossStats {
  double loss = 0.0;      // mean cross-entropy, nats
  double accuracy = 0.0;  // fraction in [0, 1]
  bool is_finite = true;
};

// Non-owning view of `size` examples laid out contiguously.
struct BatchView {
  std::span<const float> inputs;
  std::span<const int> labels;
};

// Reusable forward/backward workspace for one NetworkSpec. Not thread-safe;
// each environment owns its own Model.
class Model {
 public:
  explicit Model(NetworkSpec spec);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<LayerGeometry>& geometry() const { return geometry_; }
  std::size_t num_layers() const { return geometry_.size(); }
  std::size_t parameter_count() const;

  // Mean loss/accuracy over the batch and the gradient of the mean loss.
  // When the loss is not finite the gradients are zeroed and
  // LossStats::is_finite is false.
  LossStats forward_backward(const NetworkState& state, const BatchView& batch,
                             Gradients& grads);

  // Loss/accuracy only, processed in chunks.
  LossStats evaluate(const NetworkState& state, const BatchView& data);

  // Logits for every example, row-major (examples x classes).
  std::vector<double> logits(const NetworkState& state, const BatchView& data);

 private:
  void prepare(const NetworkState& state, std::size_t batch);
  void forward(std::span<const float> inputs, std::size_t batch);
  LossStats loss_from_logits(std::span<const int> labels, std::size_t batch,
                             std::vector<double>* dlogits) const;

  NetworkSpec spec_;
  std::vector<LayerGeometry> geometry_;
  std::vector<std::vector<double>> weights_;  // double copies of the params
  std::vector<std::vector<double>> bias_;
  std::vector<std::vector<double>> acts_;     // post-activation, pre-pool
  std::vector<std::vector<double>> pooled_;
  std::vector<std::vector<std::uint32_t>> argmax_;
  std::vector<double> input_;
  std::vector<double> delta_;
  std::vector<double> delta_prev_;
};

// Free-function forms of the Model operations.
std::pair<LossStats, Gradients> forward_backward(const NetworkSpec& spec,
                                                 const NetworkState& state,
                                                 const BatchView& batch);

// Throws ConfigError on an empty split.
LossStats evaluate(const NetworkSpec& spec, const NetworkState& state,
                   const Split& split);

}  // namespace ganno::nn
