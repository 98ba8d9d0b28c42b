#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "m2a/tensor.hpp"

namespace m2a {

/// Flat storage of N labeled C x H x W images with values in [0,1].
struct LabeledImages {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;  // N * C * H * W, row-major per image
  std::vector<int> labels;

  std::size_t count() const { return labels.size(); }
  std::size_t image_size() const { return channels * height * width; }
  std::span<const double> image(std::size_t i) const {
    return std::span(pixels).subspan(i * image_size(), image_size());
  }
  std::span<double> image(std::size_t i) { return std::span(pixels).subspan(i * image_size(), image_size()); }

  /// Gathers the listed images into a [B, C, H, W] tensor.
  ad::Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;
};

}  // namespace m2a
