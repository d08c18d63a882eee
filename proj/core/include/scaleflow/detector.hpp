#pragma once

#include <vector>

#include "scaleflow/scalespace.hpp"

namespace scaleflow {

struct Keypoint {
  float x = 0.0f;         // sub-pixel column, base-image frame
  float y = 0.0f;         // sub-pixel row, base-image frame
  float sigma = 0.0f;     // characteristic scale in base-image pixels
  float response = 0.0f;  // refined DoG value at the extremum
  float orientation = 0.0f;  // radians
};

struct DetectorParams {
  float peak_threshold = 0.01f;  // on [0,1] intensities
  float edge_threshold = 10.0f;  // Hessian eigenvalue ratio bound r
  int octaves = 0;               // 0 = auto from image size
  int levels_per_octave = 3;
  double sigma0 = 1.6;
};

/// Strict 26-neighborhood DoG extrema with one quadratic refinement step;
/// low-contrast and edge-like points rejected; coordinates mapped back to
/// the base-image frame. An empty result is valid.
std::vector<Keypoint> detect(const DoGPyramid& dog, float peak_threshold,
                             float edge_threshold);

/// Dominant gradient orientation from a 36-bin histogram, Gaussian-weighted
/// with window 1.5 * sigma, computed at the nearest scale-space level.
Keypoint assign_orientation(const ScaleSpace& ss, Keypoint kp);

/// Convenience: scale space + DoG + detect on a grayscale image.
std::vector<Keypoint> detect_keypoints(const Image& gray, const DetectorParams& params = {});

}  // namespace scaleflow
