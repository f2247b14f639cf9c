#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace ganno::env {

// Fixed-width per-agent observation: a global block shared by all agents
// followed by a block local to the agent's layer.
namespace obs {
inline constexpr int kTrainAcc = 0;
inline constexpr int kValAcc = 1;
inline constexpr int kTrainLoss = 2;
inline constexpr int kValLoss = 3;
inline constexpr int kNonFinite = 4;
inline constexpr int kProgress = 5;
inline constexpr int kLossRatio = 6;   // train loss / validation loss
inline constexpr int kInitLr = 7;      // log10
inline constexpr int kInitWd = 8;      // log10
inline constexpr int kGlobalWidth = 9;

inline constexpr int kLr = 9;          // log10(lr + 1e-10)
inline constexpr int kPrevAction = 10; // one-hot, 9 entries
inline constexpr int kLayerType = 19;  // one-hot: dense, conv2d, attention
inline constexpr int kDepth = 22;      // one-hot: first, intermediate, final
inline constexpr int kTrustRatio = 25;
inline constexpr int kGradNorm = 26;
inline constexpr int kUpdateNorm = 27;
inline constexpr int kWeightMean = 28;
inline constexpr int kWeightVar = 29;
inline constexpr int kWeightNorm = 30;
inline constexpr int kWidth = 31;
}  // namespace obs

using Observation = std::array<double, obs::kWidth>;

// True for features that are running-normalized; one-hot blocks and the
// non-finite flag are passed through.
bool is_continuous(int feature);

enum class AblationMode { full, lr_only, timestep_only, single_agent_global };

std::string to_string(AblationMode mode);
AblationMode ablation_mode_from_string(const std::string& name);

// Zeroes every feature the mode hides, keeping the fixed width. For
// single_agent_global only the global block survives; collapsing to one agent
// is handled by the environment.
Observation ablation_mask(const Observation& o, AblationMode mode);
std::vector<Observation> ablation_mask(std::vector<Observation> obs,
                                       AblationMode mode);

// Per-feature running mean and variance. Updated by the learner between
// collection rounds and read-only while environments are stepping.
class ObservationNormalizer {
 public:
  static constexpr double kClip = 10.0;

  void update(std::span<const Observation> batch);
  Observation normalize(const Observation& o) const;

  double count() const { return count_; }
  const Observation& mean() const { return mean_; }
  Observation variance() const;

  nlohmann::json to_json() const;
  static ObservationNormalizer from_json(const nlohmann::json& j);

  friend bool operator==(const ObservationNormalizer&,
                         const ObservationNormalizer&) = default;

 private:
  double count_ = 0.0;
  Observation mean_{};
  Observation m2_{};
};

}  // namespace ganno::env
