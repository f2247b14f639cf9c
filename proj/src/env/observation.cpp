#include "ganno/env/observation.hpp"

#include <algorithm>
#include <cmath>

#include "ganno/errors.hpp"

namespace ganno::env {

bool is_continuous(int f) {
  if (f == obs::kNonFinite) return false;
  return f < obs::kPrevAction || f >= obs::kTrustRatio;
}

std::string to_string(AblationMode mode) {
  switch (mode) {
    case AblationMode::full: return "full";
    case AblationMode::lr_only: return "lr_only";
    case AblationMode::timestep_only: return "timestep_only";
    case AblationMode::single_agent_global: return "single_agent_global";
  }
  return "unknown";
}

AblationMode ablation_mode_from_string(const std::string& name) {
  if (name == "full") return AblationMode::full;
  if (name == "lr_only") return AblationMode::lr_only;
  if (name == "timestep_only") return AblationMode::timestep_only;
  if (name == "single_agent_global" || name == "single_agent") {
    return AblationMode::single_agent_global;
  }
  throw ConfigError("unknown ablation mode '" + name + "'");
}

Observation ablation_mask(const Observation& o, AblationMode mode) {
  Observation out{};
  switch (mode) {
    case AblationMode::full:
      return o;
    case AblationMode::lr_only:
      out[obs::kLr] = o[obs::kLr];
      break;
    case AblationMode::timestep_only:
      out[obs::kProgress] = o[obs::kProgress];
      break;
    case AblationMode::single_agent_global:
      std::copy_n(o.begin(), obs::kGlobalWidth, out.begin());
      break;
  }
  return out;
}

std::vector<Observation> ablation_mask(std::vector<Observation> batch,
                                       AblationMode mode) {
  for (auto& o : batch) o = ablation_mask(o, mode);
  return batch;
}

void ObservationNormalizer::update(std::span<const Observation> batch) {
  if (batch.empty()) return;
  const double n = static_cast<double>(batch.size());
  Observation mean{}, m2{};
  for (const auto& o : batch) {
    for (int f = 0; f < obs::kWidth; ++f) mean[f] += o[f];
  }
  for (double& m : mean) m /= n;
  for (const auto& o : batch) {
    for (int f = 0; f < obs::kWidth; ++f) {
      const double d = o[f] - mean[f];
      m2[f] += d * d;
    }
  }
  const double total = count_ + n;
  for (int f = 0; f < obs::kWidth; ++f) {
    const double delta = mean[f] - mean_[f];
    mean_[f] += delta * n / total;
    m2_[f] += m2[f] + delta * delta * count_ * n / total;
  }
  count_ = total;
}

Observation ObservationNormalizer::variance() const {
  Observation v{};
  if (count_ > 0.0) {
    for (int f = 0; f < obs::kWidth; ++f) v[f] = m2_[f] / count_;
  }
  return v;
}

Observation ObservationNormalizer::normalize(const Observation& o) const {
  Observation out = o;
  if (count_ <= 0.0) return out;
  for (int f = 0; f < obs::kWidth; ++f) {
    if (!is_continuous(f)) continue;
    const double z = (o[f] - mean_[f]) / std::sqrt(m2_[f] / count_ + 1e-8);
    out[f] = std::clamp(z, -kClip, kClip);
  }
  return out;
}

nlohmann::json ObservationNormalizer::to_json() const {
  return {{"count", count_},
          {"mean", std::vector<double>(mean_.begin(), mean_.end())},
          {"m2", std::vector<double>(m2_.begin(), m2_.end())}};
}

ObservationNormalizer ObservationNormalizer::from_json(const nlohmann::json& j) {
  ObservationNormalizer n;
  try {
    n.count_ = j.at("count").get<double>();
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto m2 = j.at("m2").get<std::vector<double>>();
    if (mean.size() != obs::kWidth || m2.size() != obs::kWidth) {
      throw DecodeError("normalizer width mismatch");
    }
    std::copy(mean.begin(), mean.end(), n.mean_.begin());
    std::copy(m2.begin(), m2.end(), n.m2_.begin());
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("bad normalizer record: ") + e.what());
  }
  return n;
}

}  // namespace ganno::env
