#pragma once

#include <cstddef>
#include <vector>

#include "stageseq/tensor.hpp"

namespace stageseq {

// Integer stage index in [0, K-1].
using StageLabel = int;

// Grayscale (or multi-channel) intensity grid with values in [0, 1], stored
// row-major with interleaved channels.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c = 1, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c = 0) noexcept { return pixels[(y * width + x) * channels + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const noexcept {
    return pixels[(y * width + x) * channels + c];
  }

  Tensor as_tensor() const { return Tensor({height, width, channels}, pixels); }

  friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace stageseq
