#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scaleflow/flow.hpp"

namespace scaleflow {

struct ErrorStats {
  double mean_ae = 0.0;  // degrees
  double sd_ae = 0.0;
  double mean_ee = 0.0;  // pixels
  double sd_ee = 0.0;
  std::size_t valid_count = 0;
};

struct MetricResult {
  std::vector<float> per_pixel;  // -1 where ground truth is unknown
  double mean = 0.0;
  double sd = 0.0;
  std::size_t valid_count = 0;
};

/// AE(p) = arccos((u u' + v v' + 1) / (|(u,v,1)| |(u',v',1)|)) in degrees.
/// Ground-truth pixels with |component| > 1e9 are excluded.
MetricResult angular_error(const FlowField& est, const FlowField& gt);

/// EE(p) = Euclidean distance between the flow vectors.
MetricResult endpoint_error(const FlowField& est, const FlowField& gt);

ErrorStats error_stats(const FlowField& est, const FlowField& gt);

struct NoiseStudyRow {
  double fraction = 0.0;
  double mean_ae = 0.0, se_ae = 0.0;
  double mean_ee = 0.0, se_ee = 0.0;
};

/// Scale-noise robustness: both copies start at the constant 8/3 scale map;
/// the target copy's map is corrupted with N(0, 2) noise at a random pixel
/// subset per fraction (clamped to [0.5, 24]), descriptors re-extracted, and
/// the flow against the unmodified copy scored versus zero ground truth.
/// Reproducible given rng_seed.
std::vector<NoiseStudyRow> noise_study(const Image& img,
                                       const std::vector<double>& fractions,
                                       int trials, std::uint64_t rng_seed,
                                       const FlowParams& flow_params = {});

struct BenchRow {
  std::string pair;
  std::string method;
  double mean_ae = 0.0, sd_ae = 0.0;
  double mean_ee = 0.0, sd_ee = 0.0;
  double prop_sec = 0.0, flow_sec = 0.0;
};

struct BenchOptions {
  double factor_a = 0.7;  // source resize
  double factor_b = 0.2;  // target resize
  std::vector<PipelineMethod> methods = {PipelineMethod::DSift,
                                         PipelineMethod::MatchAware};
  PipelineOptions pipe;
  int jobs = 1;
};

/// Scaled stereo benchmark: every <dir>/<pair>/ with frame10/frame11 images
/// and a flow10.flo ground truth is resized per the factors, the ground
/// truth composed into the resized source frame, and each method's pipeline
/// scored. Errors are reported in the source (factor_a) frame.
std::vector<BenchRow> scaled_benchmark(const std::string& dataset_dir,
                                       const BenchOptions& opt);

/// Ground truth for a resized pair: gt'(p) = q - p where the source pixel is
/// mapped through the original-resolution flow and both center-aligned
/// resizes. Unknown pixels carry kUnknownFlow * 10.
FlowField compose_scaled_ground_truth(const FlowField& gt, double factor_a,
                                      double factor_b, int out_width, int out_height);

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path);
std::string format_bench_table(const std::vector<BenchRow>& rows);

struct RuntimeReport {
  double propagation_seconds = 0.0;
  double flow_seconds = 0.0;
  double ratio = 0.0;
};

RuntimeReport runtime_report(const Image& img_a, const Image& img_b,
                             PipelineMethod method, const PipelineOptions& opt = {});

const char* method_name(PipelineMethod method);
bool parse_method(const std::string& name, PipelineMethod& out);

}  // namespace scaleflow
