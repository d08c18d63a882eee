#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "scaleflow/flow_field.hpp"

namespace scaleflow {

/// Row-major floating-point image with samples in [0,1]. Grayscale (1
/// channel) or RGB (3 channels). Immutable by convention once built; all
/// operations below return new images.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;

  static Image zeros(int w, int h, int c = 1);

  float& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * height;
  }
};

/// Luma conversion (0.299 R + 0.587 G + 0.114 B); identity on 1-channel input.
Image to_grayscale(const Image& img);

/// Bilinear resampling; output dims = round(dim * factor).
/// Throws Error(InvalidArgument) if a dimension would round to zero.
Image resize(const Image& img, double factor);

/// Bilinear sample with edge clamping; coordinates in pixel units.
float sample_bilinear(const Image& img, float x, float y, int c = 0);

struct WarpResult {
  Image image;
  std::vector<std::uint8_t> valid;  // 1 where p + w(p) landed inside target
};

/// Backward warp: output(p) = target(p + w(p)). Out-of-bounds samples are
/// zero-filled and flagged invalid in the mask.
WarpResult warp_backward(const Image& target, const FlowField& flow);

}  // namespace scaleflow
