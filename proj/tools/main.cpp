// scaleflow: dense cross-scene correspondence CLI.
//
// Subcommands wrap the library stages: detect (keypoints), propagate
// (dense scale maps), flow (full pipeline), eval (flow metrics), bench
// (scaled stereo study), noise (scale-noise robustness study).
//
// Exit codes: 0 success, 2 usage or input error, 3 numerical failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scaleflow/descriptor.hpp"
#include "scaleflow/detector.hpp"
#include "scaleflow/error.hpp"
#include "scaleflow/evaluation.hpp"
#include "scaleflow/flo_io.hpp"
#include "scaleflow/flow.hpp"
#include "scaleflow/image_io.hpp"
#include "scaleflow/propagation.hpp"

namespace fs = std::filesystem;
using namespace scaleflow;

namespace {

void write_text_atomic(const std::string& path, const std::string& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw Error(ErrorCode::MissingFile, "cannot open for write: " + tmp);
    out << body;
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error(ErrorCode::MissingFile, "cannot write " + path);
  }
}

std::string stem_of(const std::string& path) {
  return fs::path(path).stem().string();
}

// Shared parameter bundles. Each subcommand registers the flags it needs;
// CLI11's config support gives flag > config file > default precedence.
struct ParamFlags {
  DetectorParams det;
  PropagationParams prop;
  FlowParams flow;
};

void add_detector_flags(CLI::App* cmd, DetectorParams& p) {
  cmd->add_option("--peak-threshold", p.peak_threshold,
                  "DoG contrast threshold")->capture_default_str();
  cmd->add_option("--edge-threshold", p.edge_threshold,
                  "Hessian eigenvalue ratio bound")->capture_default_str();
  cmd->add_option("--octaves", p.octaves,
                  "scale-space octaves (0 = auto)")->capture_default_str();
  cmd->add_option("--levels-per-octave", p.levels_per_octave,
                  "scales per octave")->capture_default_str();
  cmd->add_option("--sigma0", p.sigma0,
                  "base blur of the first level")->capture_default_str();
}

void add_prop_flags(CLI::App* cmd, PropagationParams& p) {
  cmd->add_option("--sigma-min", p.sigma_min,
                  "scale map lower clamp")->capture_default_str();
  cmd->add_option("--sigma-max", p.sigma_max,
                  "scale map upper clamp")->capture_default_str();
  cmd->add_option("--solver-tol", p.solver_tol,
                  "propagation solver tolerance")->capture_default_str();
  cmd->add_option("--keep-fraction", p.keep_fraction,
                  "fraction of matches kept by ratio")->capture_default_str();
}

void add_flow_flags(CLI::App* cmd, FlowParams& p) {
  cmd->add_option("--flow-k", p.k, "data cost truncation")->capture_default_str();
  cmd->add_option("--nu", p.nu, "displacement penalty")->capture_default_str();
  cmd->add_option("--alpha", p.alpha, "smoothness weight")->capture_default_str();
  cmd->add_option("--flow-d", p.d, "smoothness truncation")->capture_default_str();
  cmd->add_option("--flow-levels", p.levels,
                  "coarse-to-fine levels")->capture_default_str();
  cmd->add_option("--radius", p.radius,
                  "per-level search half-width")->capture_default_str();
  cmd->add_option("--iterations", p.iterations,
                  "sweeps per level")->capture_default_str();
}

// CLI11 only honors set_config on the root app, not on subcommands, so the
// per-subcommand config files are applied by hand after parsing. Flags win
// over file entries, file entries win over defaults.
std::vector<std::pair<CLI::App*, std::shared_ptr<std::string>>>& config_registry() {
  static std::vector<std::pair<CLI::App*, std::shared_ptr<std::string>>> reg;
  return reg;
}

void enable_config(CLI::App* cmd) {
  auto path = std::make_shared<std::string>();
  cmd->add_option("--config", *path, "flat key=value config file");
  config_registry().emplace_back(cmd, path);
}

void apply_configs() {
  for (auto& [cmd, path] : config_registry()) {
    if (!cmd->parsed() || path->empty()) continue;
    std::ifstream in(*path);
    if (!in) throw CLI::FileError::Missing(*path);
    std::string line;
    while (std::getline(in, line)) {
      std::string trimmed = CLI::detail::trim_copy(line);
      if (trimmed.empty() || trimmed[0] == '#') continue;
      auto eq = trimmed.find('=');
      if (eq == std::string::npos)
        throw CLI::ConfigError("expected key=value, got: " + trimmed);
      std::string key = CLI::detail::trim_copy(trimmed.substr(0, eq));
      std::string value = CLI::detail::trim_copy(trimmed.substr(eq + 1));
      CLI::Option* op = cmd->get_option_no_throw("--" + key);
      if (op == nullptr) throw CLI::ConfigError::Extras(key);
      if (op->count() > 0) continue;  // a flag on the command line wins
      op->add_result(value);
      op->run_callback();
    }
  }
}

PipelineMethod require_method(const std::string& name) {
  PipelineMethod m;
  if (!parse_method(name, m))
    throw CLI::ValidationError("--method",
                               "expected one of dsift, geo, image, match");
  return m;
}

Image pad_to(const Image& img, int w, int h) {
  if (img.width == w && img.height == h) return img;
  Image out = Image::zeros(w, h, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(x, y, c);
  return out;
}

Image scale_map_to_image(const ScaleMap& smap) {
  Image img = Image::zeros(smap.width, smap.height);
  img.data.assign(smap.scale.begin(), smap.scale.end());
  return img;
}

void dump_scale_map(const ScaleMap& smap, const std::string& pfm_path,
                    const std::string& png_path) {
  save_pfm(scale_map_to_image(smap), pfm_path);
  float lo = 0.0f, hi = 0.0f;
  Image render = render_scale_map(smap, lo, hi);
  save_png(render, png_path);
  char legend[64];
  std::snprintf(legend, sizeof(legend), "%.4f %.4f\n", lo, hi);
  write_text_atomic(png_path + ".legend", legend);
}

// ---- noise plot -----------------------------------------------------------

void draw_line(Image& img, double x0, double y0, double x1, double y1, float r,
               float g, float b) {
  double len = std::max(std::abs(x1 - x0), std::abs(y1 - y0));
  int steps = std::max(1, static_cast<int>(std::ceil(len)));
  for (int i = 0; i <= steps; ++i) {
    double t = static_cast<double>(i) / steps;
    int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
    img.at(x, y, 0) = r;
    img.at(x, y, 1) = g;
    img.at(x, y, 2) = b;
  }
}

Image render_noise_plot(const std::vector<NoiseStudyRow>& rows) {
  const int W = 640, H = 440, ml = 50, mr = 20, mt = 20, mb = 40;
  Image img = Image::zeros(W, H, 3);
  std::fill(img.data.begin(), img.data.end(), 1.0f);
  double max_y = 1e-6;
  for (const auto& r : rows) max_y = std::max(max_y, r.mean_ee + r.se_ee);
  max_y *= 1.05;
  auto px = [&](double f) { return ml + f * (W - ml - mr); };
  auto py = [&](double e) { return H - mb - (e / max_y) * (H - mt - mb); };
  draw_line(img, ml, mt, ml, H - mb, 0, 0, 0);
  draw_line(img, ml, H - mb, W - mr, H - mb, 0, 0, 0);
  for (int i = 0; i <= 10; ++i) {
    double f = i / 10.0;
    draw_line(img, px(f), H - mb, px(f), H - mb + 4, 0, 0, 0);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    draw_line(img, px(r.fraction), py(r.mean_ee - r.se_ee), px(r.fraction),
              py(r.mean_ee + r.se_ee), 0.7f, 0.2f, 0.2f);
    if (i > 0)
      draw_line(img, px(rows[i - 1].fraction), py(rows[i - 1].mean_ee),
                px(r.fraction), py(r.mean_ee), 0.1f, 0.1f, 0.8f);
  }
  return img;
}

// ---- subcommand bodies ----------------------------------------------------

int cmd_detect(const std::string& input, const std::string& output,
               const DetectorParams& det) {
  Image gray = to_grayscale(load_image(input));
  std::vector<Keypoint> kps = detect_keypoints(gray, det);
  int octaves = det.octaves ? det.octaves : default_octaves(gray.width, gray.height);
  ScaleSpace ss = build_scale_space(gray, octaves, det.levels_per_octave, det.sigma0);
  std::ostringstream body;
  for (Keypoint kp : kps) {
    kp = assign_orientation(ss, kp);
    char line[160];
    std::snprintf(line, sizeof(line), "%.4f %.4f %.4f %.6f %.4f\n", kp.x, kp.y,
                  kp.sigma, kp.response, kp.orientation);
    body << line;
  }
  if (output.empty() || output == "-")
    std::cout << body.str();
  else
    write_text_atomic(output, body.str());
  return 0;
}

int cmd_propagate(const std::string& input_a, const std::string& input_b,
                  const std::string& method, const std::string& out_dir,
                  const ParamFlags& params) {
  if (method == "match" && input_b.empty())
    throw CLI::ValidationError("--method", "match needs two images");
  fs::create_directories(out_dir.empty() ? "." : out_dir);
  fs::path dir(out_dir.empty() ? "." : out_dir);

  auto single = [&](const std::string& path, PropagationScheme scheme) {
    Image gray = to_grayscale(load_image(path));
    std::vector<Keypoint> kps = detect_keypoints(gray, params.det);
    auto seeds = seeds_from_keypoints(kps, gray.width, gray.height,
                                      params.prop.sigma_min, params.prop.sigma_max);
    ScaleMap smap = propagate(gray, seeds, scheme, params.prop);
    dump_scale_map(smap, (dir / (stem_of(path) + ".pfm")).string(),
                   (dir / (stem_of(path) + "_scales.png")).string());
  };

  if (method == "geo" || method == "image") {
    PropagationScheme scheme = method == "geo" ? PropagationScheme::Geometric
                                               : PropagationScheme::ImageAware;
    single(input_a, scheme);
    if (!input_b.empty()) single(input_b, scheme);
  } else if (method == "match") {
    Image a = to_grayscale(load_image(input_a));
    Image b = to_grayscale(load_image(input_b));
    auto kps_a = detect_keypoints(a, params.det);
    auto kps_b = detect_keypoints(b, params.det);
    auto maps = propagate_matched(a, b, kps_a, kps_b,
                                  PropagationScheme::ImageAware, params.prop);
    dump_scale_map(maps.first, (dir / (stem_of(input_a) + ".pfm")).string(),
                   (dir / (stem_of(input_a) + "_scales.png")).string());
    dump_scale_map(maps.second, (dir / (stem_of(input_b) + ".pfm")).string(),
                   (dir / (stem_of(input_b) + "_scales.png")).string());
  } else {
    throw CLI::ValidationError("--method", "expected geo, image or match");
  }
  return 0;
}

int cmd_flow(const std::string& input_a, const std::string& input_b,
             const std::string& method, const std::string& out_dir,
             const ParamFlags& params) {
  PipelineMethod m = require_method(method);
  Image a = load_image(input_a);
  Image b = load_image(input_b);
  PipelineOptions opt;
  opt.det = params.det;
  opt.prop = params.prop;
  opt.flow = params.flow;
  PipelineResult res = pipeline(a, b, m, opt);

  fs::create_directories(out_dir.empty() ? "." : out_dir);
  fs::path dir(out_dir.empty() ? "." : out_dir);
  save_flo(res.flow, (dir / "flow.flo").string());
  Image b_pad = pad_to(b, res.flow.width, res.flow.height);
  WarpResult warped = warp_backward(b_pad, res.flow);
  save_png(warped.image, (dir / "hallucination.png").string());
  if (res.smap_a.width > 0)
    save_pfm(scale_map_to_image(res.smap_a), (dir / "scales_a.pfm").string());
  if (res.smap_b.width > 0)
    save_pfm(scale_map_to_image(res.smap_b), (dir / "scales_b.pfm").string());
  return 0;
}

int cmd_eval(const std::string& est_path, const std::string& gt_path,
             const std::string& csv_path) {
  FlowField est = load_flo(est_path);
  FlowField gt = load_flo(gt_path);
  ErrorStats stats = error_stats(est, gt);
  std::printf("AE %.3f +- %.3f deg\nEE %.3f +- %.3f px\nvalid %zu\n",
              stats.mean_ae, stats.sd_ae, stats.mean_ee, stats.sd_ee,
              stats.valid_count);
  if (!csv_path.empty()) {
    bool fresh = !fs::exists(csv_path);
    std::ofstream out(csv_path, std::ios::app);
    if (!out) throw Error(ErrorCode::MissingFile, "cannot open " + csv_path);
    if (fresh) out << "est,gt,mean_ae,sd_ae,mean_ee,sd_ee\n";
    char line[512];
    std::snprintf(line, sizeof(line), "%s,%s,%.4f,%.4f,%.4f,%.4f\n",
                  est_path.c_str(), gt_path.c_str(), stats.mean_ae, stats.sd_ae,
                  stats.mean_ee, stats.sd_ee);
    out << line;
  }
  return 0;
}

int cmd_bench(const std::string& dataset_dir, const std::string& methods_csv,
              int jobs, double factor_a, double factor_b,
              const std::string& csv_path, const ParamFlags& params) {
  BenchOptions opt;
  opt.factor_a = factor_a;
  opt.factor_b = factor_b;
  opt.jobs = jobs;
  opt.pipe.det = params.det;
  opt.pipe.prop = params.prop;
  opt.pipe.flow = params.flow;
  opt.methods.clear();
  std::stringstream ss(methods_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) opt.methods.push_back(require_method(tok));
  if (opt.methods.empty())
    throw CLI::ValidationError("--methods", "need at least one method");

  std::vector<BenchRow> rows = scaled_benchmark(dataset_dir, opt);
  std::cout << format_bench_table(rows);
  if (!csv_path.empty()) write_bench_csv(rows, csv_path);
  return 0;
}

int cmd_noise(const std::string& input, const std::string& fractions_csv,
              int trials, std::uint64_t seed, const std::string& csv_path,
              const std::string& plot_path, const FlowParams& flow_params) {
  std::vector<double> fractions;
  std::stringstream ss(fractions_csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) fractions.push_back(std::stod(tok));
  if (fractions.empty())
    throw CLI::ValidationError("--fractions", "need at least one fraction");

  Image img = load_image(input);
  std::vector<NoiseStudyRow> rows =
      noise_study(img, fractions, trials, seed, flow_params);
  std::ostringstream body;
  body << "fraction,mean_ae,se_ae,mean_ee,se_ee\n";
  for (const auto& r : rows) {
    char line[256];
    std::snprintf(line, sizeof(line), "%.3f,%.6f,%.6f,%.6f,%.6f\n", r.fraction,
                  r.mean_ae, r.se_ae, r.mean_ee, r.se_ee);
    body << line;
  }
  std::cout << body.str();
  if (!csv_path.empty()) write_text_atomic(csv_path, body.str());
  if (!plot_path.empty()) save_png(render_noise_plot(rows), plot_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense correspondences across scenes and scales"};
  app.require_subcommand(1);

  ParamFlags params;

  // detect
  std::string det_input, det_output;
  CLI::App* detect_cmd = app.add_subcommand("detect", "detect scale-space keypoints");
  detect_cmd->add_option("image", det_input, "input image")->required();
  detect_cmd->add_option("-o,--output", det_output,
                         "keypoint text file (default: stdout)");
  add_detector_flags(detect_cmd, params.det);
  enable_config(detect_cmd);

  // propagate
  std::string prop_a, prop_b, prop_method = "image", prop_out = ".";
  CLI::App* prop_cmd = app.add_subcommand("propagate", "dense scale-map propagation");
  prop_cmd->add_option("image_a", prop_a, "first image")->required();
  prop_cmd->add_option("image_b", prop_b, "second image (match method)");
  prop_cmd->add_option("--method", prop_method, "geo | image | match")
      ->capture_default_str();
  prop_cmd->add_option("--out", prop_out, "output directory")->capture_default_str();
  add_detector_flags(prop_cmd, params.det);
  add_prop_flags(prop_cmd, params.prop);
  enable_config(prop_cmd);

  // flow
  std::string flow_a, flow_b, flow_method = "match", flow_out = ".";
  CLI::App* flow_cmd = app.add_subcommand("flow", "dense correspondence pipeline");
  flow_cmd->add_option("image_a", flow_a, "source image")->required();
  flow_cmd->add_option("image_b", flow_b, "target image")->required();
  flow_cmd->add_option("--method", flow_method, "dsift | geo | image | match")
      ->capture_default_str();
  flow_cmd->add_option("--out", flow_out, "output directory")->capture_default_str();
  add_detector_flags(flow_cmd, params.det);
  add_prop_flags(flow_cmd, params.prop);
  add_flow_flags(flow_cmd, params.flow);
  enable_config(flow_cmd);

  // eval
  std::string eval_est, eval_gt, eval_csv;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a flow against ground truth");
  eval_cmd->add_option("estimate", eval_est, "estimated .flo")->required();
  eval_cmd->add_option("truth", eval_gt, "ground-truth .flo")->required();
  eval_cmd->add_option("--csv", eval_csv, "append a CSV row here");
  enable_config(eval_cmd);

  // bench
  std::string bench_dir, bench_methods = "dsift,match", bench_csv;
  int bench_jobs = 1;
  double bench_fa = 0.7, bench_fb = 0.2;
  CLI::App* bench_cmd = app.add_subcommand("bench", "scaled stereo-pair study");
  bench_cmd->add_option("dataset", bench_dir, "dataset directory")->required();
  bench_cmd->add_option("--methods", bench_methods, "comma-separated methods")
      ->capture_default_str();
  bench_cmd->add_option("--jobs", bench_jobs, "parallel pairs")->capture_default_str();
  bench_cmd->add_option("--factor-a", bench_fa, "source resize")->capture_default_str();
  bench_cmd->add_option("--factor-b", bench_fb, "target resize")->capture_default_str();
  bench_cmd->add_option("-o,--csv", bench_csv, "CSV report path");
  add_detector_flags(bench_cmd, params.det);
  add_prop_flags(bench_cmd, params.prop);
  add_flow_flags(bench_cmd, params.flow);
  enable_config(bench_cmd);

  // noise
  std::string noise_input, noise_csv, noise_plot;
  std::string noise_fractions = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
  int noise_trials = 5;
  std::uint64_t noise_seed = 7;
  CLI::App* noise_cmd = app.add_subcommand("noise", "scale-noise robustness study");
  noise_cmd->add_option("image", noise_input, "input image")->required();
  noise_cmd->add_option("--fractions", noise_fractions,
                        "comma-separated corrupted-pixel fractions")
      ->capture_default_str();
  noise_cmd->add_option("--trials", noise_trials, "trials per fraction")
      ->capture_default_str();
  noise_cmd->add_option("--seed", noise_seed, "rng seed")->capture_default_str();
  noise_cmd->add_option("-o,--csv", noise_csv, "CSV output path");
  noise_cmd->add_option("--plot", noise_plot, "line-chart PNG path");
  add_flow_flags(noise_cmd, params.flow);
  enable_config(noise_cmd);

  try {
    app.parse(argc, argv);
    apply_configs();
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (detect_cmd->parsed()) return cmd_detect(det_input, det_output, params.det);
    if (prop_cmd->parsed())
      return cmd_propagate(prop_a, prop_b, prop_method, prop_out, params);
    if (flow_cmd->parsed())
      return cmd_flow(flow_a, flow_b, flow_method, flow_out, params);
    if (eval_cmd->parsed()) return cmd_eval(eval_est, eval_gt, eval_csv);
    if (bench_cmd->parsed())
      return cmd_bench(bench_dir, bench_methods, bench_jobs, bench_fa, bench_fb,
                       bench_csv, params);
    if (noise_cmd->parsed())
      return cmd_noise(noise_input, noise_fractions, noise_trials, noise_seed,
                       noise_csv, noise_plot, params.flow);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::NumericalFailure ? 3 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
