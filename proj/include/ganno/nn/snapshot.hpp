#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ganno/nn/network.hpp"

namespace ganno::nn {

// Byte layout (all little-endian):
//   "GNSN" magic, u32 version, u32 layer count,
//   per layer: six arrays in the order weights, bias, m_weights, m_bias,
//   v_weights, v_bias, each as u32 element count followed by f32 values,
//   u64 step counter.
inline constexpr std::uint32_t kSnapshotVersion = 1;

std::vector<std::uint8_t> snapshot(const NetworkState& state);

// Throws DecodeError on bad magic/version, truncation, trailing bytes,
// moment arrays that do not match their parameters, or negative second
// moments.
NetworkState restore(std::span<const std::uint8_t> bytes);

void save_snapshot(const NetworkState& state, const std::filesystem::path& path);
NetworkState load_snapshot(const std::filesystem::path& path);

}  // namespace ganno::nn
