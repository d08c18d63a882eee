#pragma once

#include <vector>

#include "scaleflow/image.hpp"

namespace scaleflow {

/// Input images are assumed to carry a nominal camera blur of this sigma;
/// blurring to a requested level sigma applies sqrt(sigma^2 - kInitialBlur^2).
inline constexpr double kInitialBlur = 0.5;

/// Separable Gaussian convolution, kernel truncated at +-ceil(4*sigma) and
/// renormalized to sum 1; reflective (mirror) boundary handling.
Image gaussian_blur(const Image& img, double sigma);

struct ScaleSpaceLevel {
  int octave = 0;
  int level = 0;       // Gaussian index within the octave
  double sigma = 0.0;  // absolute scale in base-image pixels
  Image image;
};

/// Gaussian scale space: per octave, levels_per_octave + 3 images with
/// sigma(o, s) = sigma0 * 2^(o + s / levels_per_octave); dimensions halve
/// per octave.
struct ScaleSpace {
  int octaves = 0;
  int levels_per_octave = 0;
  double sigma0 = 0.0;
  std::vector<ScaleSpaceLevel> levels;

  int gaussians_per_octave() const { return levels_per_octave + 3; }
  const ScaleSpaceLevel& at(int octave, int level) const {
    return levels[static_cast<std::size_t>(octave) * gaussians_per_octave() + level];
  }
};

/// Adjacent Gaussian level differences (upper minus lower) within each octave.
struct DoGPyramid {
  int octaves = 0;
  int levels_per_octave = 0;
  double sigma0 = 0.0;
  std::vector<ScaleSpaceLevel> layers;

  int layers_per_octave() const { return levels_per_octave + 2; }
  const ScaleSpaceLevel& at(int octave, int layer) const {
    return layers[static_cast<std::size_t>(octave) * layers_per_octave() + layer];
  }
};

/// Builds the scale space by incremental blurring; the next octave is seeded
/// by 2x downsampling of the level at twice the octave base sigma.
/// Throws if the image is too small for the requested octave count.
ScaleSpace build_scale_space(const Image& gray, int octaves, int levels_per_octave,
                             double sigma0);

DoGPyramid build_dog(const ScaleSpace& ss);

/// Octave count that keeps the coarsest octave at least 8 pixels on a side.
int default_octaves(int width, int height);

}  // namespace scaleflow
