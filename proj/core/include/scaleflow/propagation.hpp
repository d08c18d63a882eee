#pragma once

#include <utility>
#include <vector>

#include "scaleflow/detector.hpp"
#include "scaleflow/solver.hpp"

namespace scaleflow {

enum class PropagationScheme { Geometric, ImageAware };

/// Dense per-pixel scale field S_I(p).
struct ScaleMap {
  enum class Method { Geometric, ImageAware, MatchAware, Constant };

  int width = 0;
  int height = 0;
  Method method = Method::Constant;
  std::vector<float> scale;
  std::vector<std::uint8_t> seed_mask;

  static ScaleMap constant(int w, int h, float sigma);

  float at(int x, int y) const {
    return scale[static_cast<std::size_t>(y) * width + x];
  }
};

struct SparseMatch {
  Keypoint kp_a;
  Keypoint kp_b;
  float ratio = 0.0f;  // closest / second-closest descriptor distance
};

struct PropagationParams {
  float sigma_min = 0.5f;
  float sigma_max = 24.0f;
  double solver_tol = 1e-6;
  int solver_max_iter = 0;  // 0 = solver default
  float keep_fraction = 0.2f;
};

/// Rounds keypoints to pixels; collisions keep the largest |response|;
/// sigmas clamped to [sigma_min, sigma_max]. Throws on an empty list.
std::vector<std::pair<int, double>> seeds_from_keypoints(
    const std::vector<Keypoint>& kps, int width, int height,
    float sigma_min = 0.5f, float sigma_max = 24.0f);

/// Uniform 8-neighborhood affinities, 1/|N(p)| each (8 interior, 5 edge,
/// 3 corner).
StencilField uniform_weights(int width, int height);

/// Intensity affinities 1 + (I(p)-mu_p)(I(q)-mu_p)/var_p over the 3x3
/// neighborhood, rescaled to sum 1; homogeneous patches (var < 1e-6) fall
/// back to the uniform stencil.
StencilField ncc_weights(const Image& gray);

ScaleMap propagate(const Image& gray,
                   const std::vector<std::pair<int, double>>& seeds,
                   PropagationScheme scheme, const PropagationParams& params = {});

struct MatchSeedsResult {
  std::vector<std::pair<int, double>> seeds_a;
  std::vector<std::pair<int, double>> seeds_b;
  std::vector<SparseMatch> matches;  // the retained fraction, sorted by ratio
};

/// Mutual nearest-neighbor matching of oriented sparse descriptors at the
/// detected keypoints; keeps the best keep_fraction by ratio. Throws
/// Error(NoMatches) when no mutual match exists (callers fall back to
/// geometric / image-aware propagation).
MatchSeedsResult match_seeds(const Image& img_a, const Image& img_b,
                             const std::vector<Keypoint>& kps_a,
                             const std::vector<Keypoint>& kps_b,
                             float keep_fraction = 0.2f);

std::pair<ScaleMap, ScaleMap> propagate_matched(
    const Image& img_a, const Image& img_b, const std::vector<Keypoint>& kps_a,
    const std::vector<Keypoint>& kps_b,
    PropagationScheme guidance = PropagationScheme::ImageAware,
    const PropagationParams& params = {});

/// Color-coded rendering of a scale map plus a "<min> <max>" legend sidecar.
Image render_scale_map(const ScaleMap& smap, float& out_min, float& out_max);

}  // namespace scaleflow
