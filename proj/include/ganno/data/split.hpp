#pragma once

#include <cstddef>
#include <vector>

#include "ganno/nn/network.hpp"

namespace ganno {

// Examples stored contiguously, each of `shape.size()` floats in [0, 1].
struct Split {
  nn::Shape shape;
  std::vector<float> inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  bool empty() const { return labels.empty(); }

  nn::BatchView view() const { return {inputs, labels}; }
  // Examples [first, first + count).
  nn::BatchView view(std::size_t first, std::size_t count) const {
    const std::size_t width = shape.size();
    return {std::span<const float>(inputs).subspan(first * width,
                                                   count * width),
            std::span<const int>(labels).subspan(first, count)};
  }

  friend bool operator==(const Split&, const Split&) = default;
};

}  // namespace ganno
