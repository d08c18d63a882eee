#include "scaleflow/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "scaleflow/error.hpp"
#include "scaleflow/flo_io.hpp"
#include "scaleflow/image_io.hpp"

namespace scaleflow {

namespace fs = std::filesystem;

namespace {

constexpr double kRadToDeg = 57.29577951308232;

bool gt_known(const FlowField& gt, std::size_t i) {
  return std::abs(gt.u[i]) <= kUnknownFlow && std::abs(gt.v[i]) <= kUnknownFlow;
}

void check_dims(const FlowField& est, const FlowField& gt) {
  if (est.width != gt.width || est.height != gt.height)
    throw Error(ErrorCode::InvalidArgument, "flow metric: dimension mismatch");
}

void finalize(MetricResult& res, double sum, double sum2) {
  if (res.valid_count > 0) {
    res.mean = sum / static_cast<double>(res.valid_count);
    double var = sum2 / static_cast<double>(res.valid_count) - res.mean * res.mean;
    res.sd = std::sqrt(std::max(var, 0.0));
  }
}

}  // namespace

MetricResult angular_error(const FlowField& est, const FlowField& gt) {
  check_dims(est, gt);
  MetricResult res;
  res.per_pixel.assign(est.u.size(), -1.0f);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < est.u.size(); ++i) {
    if (!gt_known(gt, i)) continue;
    double u = est.u[i], v = est.v[i], gu = gt.u[i], gv = gt.v[i];
    double inner = (u * gu + v * gv + 1.0) /
                   (std::sqrt(u * u + v * v + 1.0) * std::sqrt(gu * gu + gv * gv + 1.0));
    double ae = std::acos(std::clamp(inner, -1.0, 1.0)) * kRadToDeg;
    res.per_pixel[i] = static_cast<float>(ae);
    sum += ae;
    sum2 += ae * ae;
    ++res.valid_count;
  }
  finalize(res, sum, sum2);
  return res;
}

MetricResult endpoint_error(const FlowField& est, const FlowField& gt) {
  check_dims(est, gt);
  MetricResult res;
  res.per_pixel.assign(est.u.size(), -1.0f);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < est.u.size(); ++i) {
    if (!gt_known(gt, i)) continue;
    double du = est.u[i] - gt.u[i], dv = est.v[i] - gt.v[i];
    double ee = std::sqrt(du * du + dv * dv);
    res.per_pixel[i] = static_cast<float>(ee);
    sum += ee;
    sum2 += ee * ee;
    ++res.valid_count;
  }
  finalize(res, sum, sum2);
  return res;
}

ErrorStats error_stats(const FlowField& est, const FlowField& gt) {
  MetricResult ae = angular_error(est, gt);
  MetricResult ee = endpoint_error(est, gt);
  ErrorStats stats;
  stats.mean_ae = ae.mean;
  stats.sd_ae = ae.sd;
  stats.mean_ee = ee.mean;
  stats.sd_ee = ee.sd;
  stats.valid_count = ae.valid_count;
  return stats;
}

std::vector<NoiseStudyRow> noise_study(const Image& img,
                                       const std::vector<double>& fractions,
                                       int trials, std::uint64_t rng_seed,
                                       const FlowParams& flow_params) {
  const Image gray = to_grayscale(img);
  const std::size_t npix = gray.pixel_count();
  const ScaleMap clean = ScaleMap::constant(gray.width, gray.height,
                                            static_cast<float>(kDefaultScale));
  const DenseDescriptorField field_a = extract_dense_mapped(gray, clean);
  const FlowField zero_gt = FlowField::zeros(gray.width, gray.height);

  std::vector<NoiseStudyRow> rows;
  for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
    const double fraction = fractions[fi];
    if (fraction < 0.0 || fraction > 1.0)
      throw Error(ErrorCode::InvalidArgument, "noise_study: fraction outside [0,1]");
    std::vector<double> trial_ae, trial_ee;
    for (int trial = 0; trial < trials; ++trial) {
      std::mt19937_64 rng(rng_seed * 1000003ULL + fi * 131ULL + trial);
      ScaleMap noisy = clean;
      const std::size_t count =
          static_cast<std::size_t>(std::lround(fraction * static_cast<double>(npix)));
      std::vector<std::uint32_t> order(npix);
      std::iota(order.begin(), order.end(), 0u);
      std::shuffle(order.begin(), order.end(), rng);
      std::normal_distribution<double> noise(0.0, 2.0);
      for (std::size_t i = 0; i < count; ++i)
        noisy.scale[order[i]] = std::clamp(
            noisy.scale[order[i]] + static_cast<float>(noise(rng)), 0.5f, 24.0f);

      DenseDescriptorField field_b =
          count > 0 ? extract_dense_mapped(gray, noisy) : field_a;
      FlowField flow = estimate_flow(field_a, field_b, flow_params);
      ErrorStats stats = error_stats(flow, zero_gt);
      trial_ae.push_back(stats.mean_ae);
      trial_ee.push_back(stats.mean_ee);
    }
    auto mean_se = [&](const std::vector<double>& xs, double& mean, double& se) {
      mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
      double var = 0.0;
      for (double x : xs) var += (x - mean) * (x - mean);
      var /= xs.size();
      se = std::sqrt(var) / std::sqrt(static_cast<double>(xs.size()));
    };
    NoiseStudyRow row;
    row.fraction = fraction;
    mean_se(trial_ae, row.mean_ae, row.se_ae);
    mean_se(trial_ee, row.mean_ee, row.se_ee);
    rows.push_back(row);
  }
  return rows;
}

FlowField compose_scaled_ground_truth(const FlowField& gt, double factor_a,
                                      double factor_b, int out_width, int out_height) {
  FlowField out = FlowField::zeros(out_width, out_height);
  const float unknown = kUnknownFlow * 10.0f;
  for (int y = 0; y < out_height; ++y)
    for (int x = 0; x < out_width; ++x) {
      const std::size_t i = out.index(x, y);
      // Center-aligned inverse of the source resize.
      double x0 = (x + 0.5) / factor_a - 0.5;
      double y0 = (y + 0.5) / factor_a - 0.5;
      int ix = static_cast<int>(std::floor(x0));
      int iy = static_cast<int>(std::floor(y0));
      if (ix < 0 || iy < 0 || ix + 1 >= gt.width || iy + 1 >= gt.height) {
        ix = std::clamp(ix, 0, gt.width - (gt.width > 1 ? 2 : 1));
        iy = std::clamp(iy, 0, gt.height - (gt.height > 1 ? 2 : 1));
      }
      bool known = true;
      double gu = 0.0, gv = 0.0;
      double fx = std::clamp(x0 - ix, 0.0, 1.0);
      double fy = std::clamp(y0 - iy, 0.0, 1.0);
      for (int dy = 0; dy < 2 && known; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          int sx = std::min(ix + dx, gt.width - 1);
          int sy = std::min(iy + dy, gt.height - 1);
          std::size_t si = gt.index(sx, sy);
          if (!gt_known(gt, si)) {
            known = false;
            break;
          }
          double w = (dx == 0 ? 1.0 - fx : fx) * (dy == 0 ? 1.0 - fy : fy);
          gu += w * gt.u[si];
          gv += w * gt.v[si];
        }
      if (!known) {
        out.u[i] = unknown;
        out.v[i] = unknown;
        continue;
      }
      // Target point in the original frame, then through the target resize.
      double qx = (x0 + gu + 0.5) * factor_b - 0.5;
      double qy = (y0 + gv + 0.5) * factor_b - 0.5;
      out.u[i] = static_cast<float>(qx - x);
      out.v[i] = static_cast<float>(qy - y);
    }
  return out;
}

const char* method_name(PipelineMethod method) {
  switch (method) {
    case PipelineMethod::DSift: return "dsift";
    case PipelineMethod::Geometric: return "geo";
    case PipelineMethod::ImageAware: return "image";
    case PipelineMethod::MatchAware: return "match";
  }
  return "?";
}

bool parse_method(const std::string& name, PipelineMethod& out) {
  if (name == "dsift") out = PipelineMethod::DSift;
  else if (name == "geo") out = PipelineMethod::Geometric;
  else if (name == "image") out = PipelineMethod::ImageAware;
  else if (name == "match") out = PipelineMethod::MatchAware;
  else return false;
  return true;
}

std::vector<BenchRow> scaled_benchmark(const std::string& dataset_dir,
                                       const BenchOptions& opt) {
  struct Pair {
    std::string name;
    std::string frame_a, frame_b, gt;
  };
  std::vector<Pair> pairs;
  if (!fs::is_directory(dataset_dir))
    throw Error(ErrorCode::MissingFile, "dataset directory not found: " + dataset_dir);
  for (const auto& entry : fs::directory_iterator(dataset_dir)) {
    if (!entry.is_directory()) continue;
    Pair pair;
    pair.name = entry.path().filename().string();
    for (const char* stem : {"frame10", "frame11"}) {
      for (const char* ext : {".png", ".ppm", ".pgm"}) {
        fs::path p = entry.path() / (std::string(stem) + ext);
        if (fs::exists(p)) {
          (std::string(stem) == "frame10" ? pair.frame_a : pair.frame_b) = p.string();
          break;
        }
      }
    }
    fs::path gt = entry.path() / "flow10.flo";
    if (pair.frame_a.empty() || pair.frame_b.empty()) continue;
    if (!fs::exists(gt))
      throw Error(ErrorCode::MissingFile, "missing ground truth: " + gt.string());
    pair.gt = gt.string();
    pairs.push_back(pair);
  }
  std::sort(pairs.begin(), pairs.end(),
            [](const Pair& a, const Pair& b) { return a.name < b.name; });
  if (pairs.empty())
    throw Error(ErrorCode::MissingFile, "no benchmark pairs under " + dataset_dir);

  struct Job {
    std::size_t pair_idx;
    PipelineMethod method;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    for (PipelineMethod m : opt.methods) jobs.push_back({i, m});

  std::vector<BenchRow> rows(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      std::size_t j = next.fetch_add(1);
      if (j >= jobs.size()) break;
      try {
        const Pair& pair = pairs[jobs[j].pair_idx];
        Image a0 = load_image(pair.frame_a);
        Image b0 = load_image(pair.frame_b);
        FlowField gt0 = load_flo(pair.gt);
        Image a = resize(a0, opt.factor_a);
        Image b = resize(b0, opt.factor_b);
        FlowField gt = compose_scaled_ground_truth(gt0, opt.factor_a, opt.factor_b,
                                                   a.width, a.height);
        PipelineTimings timings;
        PipelineResult res = pipeline(a, b, jobs[j].method, opt.pipe, &timings);
        // Score in the source frame; the pipeline padded both inputs to the
        // larger of the two, so crop back to the source dimensions.
        FlowField est = FlowField::zeros(gt.width, gt.height);
        for (int y = 0; y < gt.height; ++y)
          for (int x = 0; x < gt.width; ++x) {
            est.u[est.index(x, y)] = res.flow.u[res.flow.index(x, y)];
            est.v[est.index(x, y)] = res.flow.v[res.flow.index(x, y)];
          }
        ErrorStats stats = error_stats(est, gt);
        BenchRow row;
        row.pair = pair.name;
        row.method = method_name(jobs[j].method);
        row.mean_ae = stats.mean_ae;
        row.sd_ae = stats.sd_ae;
        row.mean_ee = stats.mean_ee;
        row.sd_ee = stats.sd_ee;
        row.prop_sec = timings.propagation_sec;
        row.flow_sec = timings.flow_sec;
        rows[j] = row;
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const int nworkers = std::clamp(opt.jobs, 1, static_cast<int>(jobs.size()));
  std::vector<std::thread> pool;
  for (int i = 0; i < nworkers - 1; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorCode::MissingFile, "cannot open for write: " + tmp);
    out << "pair,method,mean_ae,sd_ae,mean_ee,sd_ee,prop_sec,flow_sec\n";
    for (const BenchRow& r : rows) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%s,%s,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                    r.pair.c_str(), r.method.c_str(), r.mean_ae, r.sd_ae, r.mean_ee,
                    r.sd_ee, r.prop_sec, r.flow_sec);
      out << buf;
    }
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error(ErrorCode::MissingFile, "cannot write " + path);
  }
}

std::string format_bench_table(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-16s %-7s %14s %14s %9s %9s\n", "Pair", "Method",
                "AE +- SD", "EE +- SD", "prop[s]", "flow[s]");
  out << buf;
  out << std::string(74, '-') << "\n";
  for (const BenchRow& r : rows) {
    char ae[32], ee[32];
    std::snprintf(ae, sizeof(ae), "%.2f +- %.2f", r.mean_ae, r.sd_ae);
    std::snprintf(ee, sizeof(ee), "%.2f +- %.2f", r.mean_ee, r.sd_ee);
    std::snprintf(buf, sizeof(buf), "%-16s %-7s %14s %14s %9.3f %9.3f\n",
                  r.pair.c_str(), r.method.c_str(), ae, ee, r.prop_sec, r.flow_sec);
    out << buf;
  }
  return out.str();
}

RuntimeReport runtime_report(const Image& img_a, const Image& img_b,
                             PipelineMethod method, const PipelineOptions& opt) {
  PipelineTimings timings;
  pipeline(img_a, img_b, method, opt, &timings);
  RuntimeReport report;
  report.propagation_seconds = timings.propagation_sec;
  report.flow_seconds = timings.flow_sec;
  report.ratio = timings.flow_sec > 0.0
                     ? timings.propagation_sec / timings.flow_sec
                     : 0.0;
  return report;
}

}  // namespace scaleflow
