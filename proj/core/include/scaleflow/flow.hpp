#pragma once

#include <utility>
#include <vector>

#include "scaleflow/descriptor.hpp"
#include "scaleflow/detector.hpp"
#include "scaleflow/flow_field.hpp"
#include "scaleflow/propagation.hpp"

namespace scaleflow {

/// Parameters of the truncated-L1 discrete flow energy: data truncation k,
/// displacement penalty nu, smoothness weight alpha with truncation d, plus
/// the coarse-to-fine schedule.
struct FlowParams {
  double k = 2.0;
  double nu = 0.005;
  double alpha = 0.01;  // 2 * nu
  double d = 0.4;       // 40 * alpha
  int levels = 4;
  int radius = 5;      // per-level search window half-width
  int iterations = 60;  // sweeps per level (early exit once energy settles)
};

/// Truncated L1 between the descriptor at p in fa and at p + w in fb;
/// displacements landing outside fb cost exactly k.
double data_cost(const DenseDescriptorField& fa, const DenseDescriptorField& fb,
                 int x, int y, int u, int v, double k);

/// Full energy of an integer-valued flow field under the params (data +
/// nu-displacement + truncated-L1 smoothness on the 4-connected grid).
double flow_energy(const DenseDescriptorField& fa, const DenseDescriptorField& fb,
                   const FlowField& flow, const FlowParams& params);

/// Coarse-to-fine discrete optimizer: per level, labels live in
/// [-radius, radius]^2 around the upsampled coarser flow, and sweeps of
/// exact chain (row/column) minimizations with truncated-L1 distance
/// transforms monotonically lower the energy. Deterministic given params.
/// Coarser levels are built by 2x2 descriptor pooling of the input fields.
FlowField estimate_flow(const DenseDescriptorField& fa, const DenseDescriptorField& fb,
                        const FlowParams& params);

/// Same optimizer over caller-provided per-level fields (index 0 = finest);
/// the pipeline extracts each level from the downsampled images instead of
/// pooling descriptors.
struct FieldPair {
  DenseDescriptorField a;
  DenseDescriptorField b;
};
FlowField estimate_flow_pyramid(const std::vector<FieldPair>& levels,
                                const FlowParams& params);

enum class PipelineMethod { DSift, Geometric, ImageAware, MatchAware };

struct PipelineOptions {
  FlowParams flow;
  PropagationParams prop;
  DetectorParams det;
  /// On match-seed failure, retry with per-image image-aware propagation
  /// (or a constant map when there are no detections at all).
  bool match_fallback = true;
  PropagationScheme match_guidance = PropagationScheme::ImageAware;
};

struct PipelineResult {
  FlowField flow;
  ScaleMap smap_a;
  ScaleMap smap_b;
};

/// Wall-clock seconds spent in each pipeline stage.
struct PipelineTimings {
  double detect_sec = 0.0;
  double propagation_sec = 0.0;  // weights + assembly + solve
  double descriptor_sec = 0.0;
  double flow_sec = 0.0;  // estimate_flow only
};

/// End to end: detect -> propagate (per method; DSift uses constant 8/3
/// maps) -> dense mapped descriptors per pyramid level -> estimate_flow.
/// Images are padded (zeros, bottom-right) to common dimensions first.
PipelineResult pipeline(const Image& img_a, const Image& img_b, PipelineMethod method,
                        const PipelineOptions& opt = {},
                        PipelineTimings* timings = nullptr);

}  // namespace scaleflow
