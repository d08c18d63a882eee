#include "scaleflow/propagation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>

#include "scaleflow/descriptor.hpp"
#include "scaleflow/error.hpp"
#include "scaleflow/scalespace.hpp"

namespace scaleflow {

ScaleMap ScaleMap::constant(int w, int h, float sigma) {
  ScaleMap m;
  m.width = w;
  m.height = h;
  m.method = Method::Constant;
  m.scale.assign(static_cast<std::size_t>(w) * h, sigma);
  m.seed_mask.assign(static_cast<std::size_t>(w) * h, 0);
  return m;
}

std::vector<std::pair<int, double>> seeds_from_keypoints(
    const std::vector<Keypoint>& kps, int width, int height, float sigma_min,
    float sigma_max) {
  if (kps.empty())
    throw Error(ErrorCode::InvalidArgument, "seeds_from_keypoints: empty keypoint list");
  // pixel -> (sigma, |response|); collisions keep the strongest response.
  std::map<int, std::pair<double, float>> chosen;
  for (const Keypoint& kp : kps) {
    int x = static_cast<int>(std::lround(kp.x));
    int y = static_cast<int>(std::lround(kp.y));
    if (x < 0 || y < 0 || x >= width || y >= height)
      throw Error(ErrorCode::InvalidArgument, "seeds_from_keypoints: keypoint outside image");
    int pixel = y * width + x;
    double sigma = std::clamp(kp.sigma, sigma_min, sigma_max);
    float strength = std::abs(kp.response);
    auto it = chosen.find(pixel);
    if (it == chosen.end() || strength > it->second.second)
      chosen[pixel] = {sigma, strength};
  }
  std::vector<std::pair<int, double>> seeds;
  seeds.reserve(chosen.size());
  for (const auto& [pixel, sv] : chosen) seeds.emplace_back(pixel, sv.first);
  return seeds;
}

StencilField uniform_weights(int width, int height) {
  StencilField field;
  field.width = width;
  field.height = height;
  field.stencils.assign(static_cast<std::size_t>(width) * height, {});
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      auto& st = field.stencils[static_cast<std::size_t>(y) * width + x];
      int count = 0;
      for (int k = 0; k < 8; ++k) {
        int qx = x + kNeighborOffsets[k].first;
        int qy = y + kNeighborOffsets[k].second;
        if (qx >= 0 && qy >= 0 && qx < width && qy < height) ++count;
      }
      for (int k = 0; k < 8; ++k) {
        int qx = x + kNeighborOffsets[k].first;
        int qy = y + kNeighborOffsets[k].second;
        st[k] = (qx >= 0 && qy >= 0 && qx < width && qy < height)
                    ? 1.0f / static_cast<float>(count)
                    : 0.0f;
      }
    }
  return field;
}

StencilField ncc_weights(const Image& gray) {
  if (gray.channels != 1)
    throw Error(ErrorCode::InvalidArgument, "ncc_weights: grayscale input required");
  const int width = gray.width, height = gray.height;
  StencilField uniform = uniform_weights(width, height);
  StencilField field;
  field.width = width;
  field.height = height;
  field.stencils.assign(static_cast<std::size_t>(width) * height, {});

  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::size_t pixel = static_cast<std::size_t>(y) * width + x;
      // Mean and variance over the clipped 3x3 neighborhood (center included).
      double sum = 0.0, sum2 = 0.0;
      int count = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          int qx = x + dx, qy = y + dy;
          if (qx < 0 || qy < 0 || qx >= width || qy >= height) continue;
          double v = gray.at(qx, qy);
          sum += v;
          sum2 += v * v;
          ++count;
        }
      double mu = sum / count;
      double var = sum2 / count - mu * mu;
      auto& st = field.stencils[pixel];
      if (var < 1e-6) {
        st = uniform.stencils[pixel];
        continue;
      }
      double raw[8];
      double raw_sum = 0.0;
      bool any = false;
      double ip = gray.at(x, y);
      for (int k = 0; k < 8; ++k) {
        int qx = x + kNeighborOffsets[k].first;
        int qy = y + kNeighborOffsets[k].second;
        if (qx < 0 || qy < 0 || qx >= width || qy >= height) {
          raw[k] = 0.0;
          continue;
        }
        raw[k] = 1.0 + (ip - mu) * (gray.at(qx, qy) - mu) / var;
        raw_sum += raw[k];
        any = true;
      }
      if (!any || std::abs(raw_sum) < 1e-6) {
        st = uniform.stencils[pixel];
        continue;
      }
      for (int k = 0; k < 8; ++k) st[k] = static_cast<float>(raw[k] / raw_sum);
    }
  return field;
}

namespace {

// Full-field solve with a coarse-to-fine initial guess: the same seeded
// system is solved on a half-resolution image first (recursively) and its
// upsampled solution seeds the fine iteration. The coarse solve removes the
// smooth error modes that otherwise dominate the iteration count on large
// grids; the result still satisfies the requested residual tolerance.
std::vector<double> solve_field(const Image& gray,
                                const std::vector<std::pair<int, double>>& seeds,
                                PropagationScheme scheme,
                                const PropagationParams& params) {
  const int width = gray.width, height = gray.height;
  StencilField weights = scheme == PropagationScheme::Geometric
                             ? uniform_weights(width, height)
                             : ncc_weights(gray);
  SparseSystem sys = assemble(width, height, weights, seeds);

  std::vector<double> init;
  if (std::min(width, height) >= 64) {
    Image coarse_img = resize(gray, 0.5);
    const int cw = coarse_img.width, ch = coarse_img.height;
    std::map<int, std::pair<double, int>> merged;  // coarse pixel -> (sum, count)
    for (const auto& [pixel, value] : seeds) {
      int cx = std::min((pixel % width) / 2, cw - 1);
      int cy = std::min((pixel / width) / 2, ch - 1);
      auto& acc = merged[cy * cw + cx];
      acc.first += value;
      acc.second += 1;
    }
    std::vector<std::pair<int, double>> coarse_seeds;
    coarse_seeds.reserve(merged.size());
    for (const auto& [pixel, sc] : merged)
      coarse_seeds.emplace_back(pixel, sc.first / sc.second);
    std::vector<double> coarse =
        solve_field(coarse_img, coarse_seeds, scheme, params);
    init.resize(static_cast<std::size_t>(width) * height);
    for (int y = 0; y < height; ++y) {
      double sy = std::clamp((y + 0.5) * ch / height - 0.5, 0.0, ch - 1.0);
      int y0 = static_cast<int>(sy);
      int y1 = std::min(y0 + 1, ch - 1);
      double fy = sy - y0;
      for (int x = 0; x < width; ++x) {
        double sx = std::clamp((x + 0.5) * cw / width - 0.5, 0.0, cw - 1.0);
        int x0 = static_cast<int>(sx);
        int x1 = std::min(x0 + 1, cw - 1);
        double fx = sx - x0;
        init[static_cast<std::size_t>(y) * width + x] =
            (1 - fy) * ((1 - fx) * coarse[y0 * cw + x0] + fx * coarse[y0 * cw + x1]) +
            fy * ((1 - fx) * coarse[y1 * cw + x0] + fx * coarse[y1 * cw + x1]);
      }
    }
  }
  if (init.empty()) {
    // Coarsest level: small enough to solve to tolerance outright.
    return solve(sys, params.solver_tol, params.solver_max_iter).values;
  }
  // Finer levels: cascadic refinement. The upsampled coarse solution already
  // carries the smooth part of the field, so a fixed budget of best-iterate
  // refinement removes the remaining high-frequency error; chasing the full
  // residual tolerance here would cost minutes on megapixel grids for scale
  // changes far below the descriptor quantization step.
  const int budget = params.solver_max_iter > 0 ? params.solver_max_iter : 64;
  return polish(sys, init, params.solver_tol, budget).values;
}

}  // namespace

ScaleMap propagate(const Image& gray,
                   const std::vector<std::pair<int, double>>& seeds,
                   PropagationScheme scheme, const PropagationParams& params) {
  const int width = gray.width, height = gray.height;
  SolveResult sol;
  sol.values = solve_field(to_grayscale(gray), seeds, scheme, params);

  ScaleMap smap;
  smap.width = width;
  smap.height = height;
  smap.method = scheme == PropagationScheme::Geometric ? ScaleMap::Method::Geometric
                                                       : ScaleMap::Method::ImageAware;
  smap.scale.resize(sol.values.size());
  smap.seed_mask.assign(sol.values.size(), 0);
  for (std::size_t i = 0; i < sol.values.size(); ++i)
    smap.scale[i] = static_cast<float>(std::clamp(
        sol.values[i], static_cast<double>(params.sigma_min),
        static_cast<double>(params.sigma_max)));
  // Seeds were clamped at seeding time; keep them bit-exact.
  for (const auto& [pixel, value] : seeds) {
    smap.scale[pixel] = static_cast<float>(value);
    smap.seed_mask[pixel] = 1;
  }
  return smap;
}

namespace {

// Oriented sparse descriptors at keypoints, sharing blurred images across
// keypoints of similar sigma.
std::vector<SiftDescriptor> sparse_descriptors(const Image& gray,
                                               const std::vector<Keypoint>& kps) {
  std::vector<SiftDescriptor> descs(kps.size());
  if (kps.empty()) return descs;
  float smin = std::numeric_limits<float>::max(), smax = 0.0f;
  for (const Keypoint& kp : kps) {
    smin = std::min(smin, kp.sigma);
    smax = std::max(smax, kp.sigma);
  }
  int levels = 1;
  if (smax > smin * 1.0001f)
    levels = std::max(
        8, 1 + static_cast<int>(std::ceil(std::log(static_cast<double>(smax) / smin) /
                                          (2.0 * std::log(1.06)))));
  std::vector<int> level_of(kps.size(), 0);
  if (levels > 1)
    for (std::size_t i = 0; i < kps.size(); ++i) {
      double t = std::log(kps[i].sigma / smin) /
                 std::log(static_cast<double>(smax) / smin) * (levels - 1);
      level_of[i] = std::clamp(static_cast<int>(std::lround(t)), 0, levels - 1);
    }
  // Ascending sigmas let each level blur incrementally from the previous one
  // (Gaussian semigroup), so the total cost stays near a single blur at smax
  // instead of one full-width blur per level.
  Image current;
  double cur_sigma = 0.0;
  bool have_blur = false;
  for (int lvl = 0; lvl < levels; ++lvl) {
    bool any = false;
    for (std::size_t i = 0; i < kps.size(); ++i)
      if (level_of[i] == lvl) {
        any = true;
        break;
      }
    if (!any) continue;
    double sigma = levels == 1
                       ? smin
                       : smin * std::pow(static_cast<double>(smax) / smin,
                                         static_cast<double>(lvl) / (levels - 1));
    if (!have_blur) {
      current = gaussian_blur(gray, sigma);
      have_blur = true;
    } else {
      double d2 = sigma * sigma - cur_sigma * cur_sigma;
      if (d2 > 1e-12) current = gaussian_blur(current, std::sqrt(d2));
    }
    cur_sigma = sigma;
    std::vector<std::array<float, 3>> pts;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < kps.size(); ++i)
      if (level_of[i] == lvl) {
        pts.push_back({kps[i].x, kps[i].y, kps[i].orientation});
        idx.push_back(i);
      }
    std::vector<SiftDescriptor> batch =
        extract_from_blurred(current, pts, static_cast<float>(sigma));
    for (std::size_t k = 0; k < idx.size(); ++k) descs[idx[k]] = std::move(batch[k]);
  }
  return descs;
}

double descriptor_distance(const SiftDescriptor& a, const SiftDescriptor& b) {
  double acc = 0.0;
  for (int i = 0; i < kDescriptorDim; ++i) {
    double d = static_cast<double>(a.values[i]) - b.values[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace

MatchSeedsResult match_seeds(const Image& img_a, const Image& img_b,
                             const std::vector<Keypoint>& kps_a,
                             const std::vector<Keypoint>& kps_b,
                             float keep_fraction) {
  if (kps_a.empty() || kps_b.empty())
    throw Error(ErrorCode::NoMatches,
                "match_seeds: no keypoints; fall back to geometric or image-aware propagation");
  const Image gray_a = to_grayscale(img_a);
  const Image gray_b = to_grayscale(img_b);

  // Orientation-normalized sparse descriptors.
  auto orient = [](const Image& gray, std::vector<Keypoint> kps) {
    ScaleSpace ss = build_scale_space(gray, default_octaves(gray.width, gray.height), 3, 1.6);
    for (Keypoint& kp : kps) kp = assign_orientation(ss, kp);
    return kps;
  };
  std::vector<Keypoint> oa = orient(gray_a, kps_a);
  std::vector<Keypoint> ob = orient(gray_b, kps_b);
  std::vector<SiftDescriptor> da = sparse_descriptors(gray_a, oa);
  std::vector<SiftDescriptor> db = sparse_descriptors(gray_b, ob);

  // Nearest and second-nearest in B for each A descriptor, and nearest in A
  // for each B descriptor (for the mutuality check); distances computed once.
  const std::size_t na = da.size(), nb = db.size();
  std::vector<double> dist(na * nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j)
      dist[i * nb + j] = descriptor_distance(da[i], db[j]);
  std::vector<int> best_b(na, -1);
  std::vector<double> d1(na, 0.0), d2(na, 0.0);
  for (std::size_t i = 0; i < na; ++i) {
    double b1 = std::numeric_limits<double>::max(), b2 = b1;
    int arg = -1;
    for (std::size_t j = 0; j < nb; ++j) {
      double d = dist[i * nb + j];
      if (d < b1) {
        b2 = b1;
        b1 = d;
        arg = static_cast<int>(j);
      } else if (d < b2) {
        b2 = d;
      }
    }
    best_b[i] = arg;
    d1[i] = b1;
    d2[i] = b2;
  }
  std::vector<int> best_a(nb, -1);
  for (std::size_t j = 0; j < nb; ++j) {
    double b1 = std::numeric_limits<double>::max();
    for (std::size_t i = 0; i < na; ++i) {
      double d = dist[i * nb + j];
      if (d < b1) {
        b1 = d;
        best_a[j] = static_cast<int>(i);
      }
    }
  }

  std::vector<SparseMatch> matches;
  for (std::size_t i = 0; i < na; ++i) {
    int j = best_b[i];
    if (j < 0 || best_a[j] != static_cast<int>(i)) continue;
    SparseMatch m;
    m.kp_a = oa[i];
    m.kp_b = ob[j];
    m.ratio = d2[i] > 0.0 ? static_cast<float>(d1[i] / d2[i])
                          : (d1[i] > 0.0 ? 1.0f : 0.0f);
    matches.push_back(m);
  }
  if (matches.empty())
    throw Error(ErrorCode::NoMatches,
                "match_seeds: no mutual matches; fall back to geometric or image-aware propagation");

  std::stable_sort(matches.begin(), matches.end(),
                   [](const SparseMatch& a, const SparseMatch& b) {
                     return a.ratio < b.ratio;
                   });
  std::size_t keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(keep_fraction * matches.size())));
  matches.resize(std::min(keep, matches.size()));

  MatchSeedsResult res;
  res.matches = matches;
  std::vector<Keypoint> sa, sb;
  for (const SparseMatch& m : matches) {
    sa.push_back(m.kp_a);
    sb.push_back(m.kp_b);
  }
  res.seeds_a = seeds_from_keypoints(sa, img_a.width, img_a.height);
  res.seeds_b = seeds_from_keypoints(sb, img_b.width, img_b.height);
  return res;
}

std::pair<ScaleMap, ScaleMap> propagate_matched(
    const Image& img_a, const Image& img_b, const std::vector<Keypoint>& kps_a,
    const std::vector<Keypoint>& kps_b, PropagationScheme guidance,
    const PropagationParams& params) {
  MatchSeedsResult seeds = match_seeds(img_a, img_b, kps_a, kps_b, params.keep_fraction);
  ScaleMap ma = propagate(to_grayscale(img_a), seeds.seeds_a, guidance, params);
  ScaleMap mb = propagate(to_grayscale(img_b), seeds.seeds_b, guidance, params);
  ma.method = ScaleMap::Method::MatchAware;
  mb.method = ScaleMap::Method::MatchAware;
  return {std::move(ma), std::move(mb)};
}

Image render_scale_map(const ScaleMap& smap, float& out_min, float& out_max) {
  out_min = std::numeric_limits<float>::max();
  out_max = std::numeric_limits<float>::lowest();
  for (float s : smap.scale) {
    out_min = std::min(out_min, s);
    out_max = std::max(out_max, s);
  }
  float range = std::max(out_max - out_min, 1e-12f);
  Image img = Image::zeros(smap.width, smap.height, 3);
  for (int y = 0; y < smap.height; ++y)
    for (int x = 0; x < smap.width; ++x) {
      float t = (smap.at(x, y) - out_min) / range;
      // Simple blue -> cyan -> yellow -> red ramp.
      float r = std::clamp(1.5f - std::abs(4.0f * t - 3.0f), 0.0f, 1.0f);
      float g = std::clamp(1.5f - std::abs(4.0f * t - 2.0f), 0.0f, 1.0f);
      float b = std::clamp(1.5f - std::abs(4.0f * t - 1.0f), 0.0f, 1.0f);
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  return img;
}

}  // namespace scaleflow
