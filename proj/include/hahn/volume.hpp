#pragma once

#include "hahn/common.hpp"

#include <vector>

namespace hahn {

/// Planar channels x height x width grid of doubles. Used both for input
/// images (channels = 3, values 0..255) and for feature maps (channels = m).
struct Volume {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Volume() = default;
  Volume(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t r, std::size_t col) {
    return data[(c * height + r) * width + col];
  }
  double at(std::size_t c, std::size_t r, std::size_t col) const {
    return data[(c * height + r) * width + col];
  }

  /// Flattened rf x rf crop at (row, col): channel-major, then row, then
  /// column.
  void crop(std::size_t row, std::size_t col, std::size_t rf,
            Eigen::Ref<Vector> out) const {
    std::size_t k = 0;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t r = 0; r < rf; ++r) {
        const double* src = &data[(c * height + row + r) * width + col];
        for (std::size_t q = 0; q < rf; ++q) out(k++) = src[q];
      }
    }
  }

  friend bool operator==(const Volume&, const Volume&) = default;
};

/// Spatial grid of rectified codes, depth = neuron count.
using FeatureMap = Volume;

}  // namespace hahn
