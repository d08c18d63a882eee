#pragma once

#include <array>
#include <string>
#include <vector>

#include "scaleflow/image.hpp"

namespace scaleflow {

struct ScaleMap;  // propagation.hpp

inline constexpr int kDescriptorDim = 128;  // 4x4 spatial bins x 8 orientations

/// Default extraction scale: SIFT bin size 8 px at magnification 3.
inline constexpr double kDefaultScale = 8.0 / 3.0;
inline constexpr double kMagnification = 3.0;

struct SiftDescriptor {
  std::array<float, kDescriptorDim> values = {};
};

struct DenseDescriptorField {
  enum class ScaleSource { Constant, ScaleMap };

  int width = 0;
  int height = 0;
  ScaleSource scale_source = ScaleSource::Constant;
  std::vector<float> data;  // width*height*128, row-major

  const float* at(int x, int y) const {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * kDescriptorDim;
  }
  float* at(int x, int y) {
    return data.data() + (static_cast<std::size_t>(y) * width + x) * kDescriptorDim;
  }
};

/// SIFT descriptor at (x, y, sigma, orientation): gradients on the image
/// blurred to sigma, 4x4x8 histogram over a window of side 4 * (3 * sigma)
/// pixels, trilinear soft-binning, Gaussian spatial weighting, then
/// normalize -> clamp at 0.2 -> renormalize. Zero-gradient windows give the
/// all-zero descriptor.
SiftDescriptor extract_at(const Image& gray, float x, float y, float sigma,
                          float orientation);

/// Same histogram path, but over an image already blurred to sigma. The dense
/// extractors call this with a shared blurred image; extract_at is a thin
/// wrapper, so both paths agree bit for bit.
SiftDescriptor extract_from_blurred(const Image& blurred, float x, float y,
                                    float sigma, float orientation);

/// Batched variant for many points sharing one blurred image and sigma: the
/// gradient planes are computed once instead of per point. Bit-identical to
/// calling the pointwise overload per entry.
std::vector<SiftDescriptor> extract_from_blurred(
    const Image& blurred, const std::vector<std::array<float, 3>>& pts,
    float sigma);  // each entry: {x, y, orientation}

DenseDescriptorField extract_dense_constant(const Image& gray, float sigma);

/// Per-pixel sigma from the scale map, upright orientation. Scales are
/// quantized to log-spaced shared blur levels (quantization error in sigma
/// below 6%).
DenseDescriptorField extract_dense_mapped(const Image& gray, const ScaleMap& smap);

/// Binary field dump: little-endian u32 header (width, height, 128), then
/// row-major little-endian f32 descriptor data.
void save_descriptor_field(const DenseDescriptorField& field, const std::string& path);
DenseDescriptorField load_descriptor_field(const std::string& path);

}  // namespace scaleflow
