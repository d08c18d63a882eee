#include "scaleflow/detector.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "scaleflow/error.hpp"

namespace scaleflow {

namespace {

constexpr float kPi = 3.14159265358979323846f;

bool is_extremum(const DoGPyramid& dog, int o, int l, int x, int y) {
  const float v = dog.at(o, l).image.at(x, y);
  for (int dl = -1; dl <= 1; ++dl) {
    const Image& layer = dog.at(o, l + dl).image;
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (dl == 0 && dx == 0 && dy == 0) continue;
        float n = layer.at(x + dx, y + dy);
        if (v > 0 ? n >= v : n <= v) return false;
      }
  }
  return true;
}

// Solves the 3x3 system H * off = -g in place; returns false if singular.
bool solve3(std::array<double, 9> h, std::array<double, 3> g,
            std::array<double, 3>& off) {
  for (int c = 0; c < 3; ++c) {
    int piv = c;
    for (int r = c + 1; r < 3; ++r)
      if (std::abs(h[r * 3 + c]) > std::abs(h[piv * 3 + c])) piv = r;
    if (std::abs(h[piv * 3 + c]) < 1e-12) return false;
    if (piv != c) {
      for (int k = 0; k < 3; ++k) std::swap(h[c * 3 + k], h[piv * 3 + k]);
      std::swap(g[c], g[piv]);
    }
    for (int r = c + 1; r < 3; ++r) {
      double f = h[r * 3 + c] / h[c * 3 + c];
      for (int k = c; k < 3; ++k) h[r * 3 + k] -= f * h[c * 3 + k];
      g[r] -= f * g[c];
    }
  }
  for (int r = 2; r >= 0; --r) {
    double s = -g[r];
    for (int k = r + 1; k < 3; ++k) s -= h[r * 3 + k] * off[k];
    off[r] = s / h[r * 3 + r];
  }
  return true;
}

}  // namespace

std::vector<Keypoint> detect(const DoGPyramid& dog, float peak_threshold,
                             float edge_threshold) {
  std::vector<Keypoint> keypoints;
  const float edge_bound =
      (edge_threshold + 1.0f) * (edge_threshold + 1.0f) / edge_threshold;

  for (int o = 0; o < dog.octaves; ++o) {
    for (int l = 1; l + 1 < dog.layers_per_octave(); ++l) {
      const Image& cur = dog.at(o, l).image;
      for (int y = 1; y + 1 < cur.height; ++y) {
        for (int x = 1; x + 1 < cur.width; ++x) {
          float v = cur.at(x, y);
          if (std::abs(v) < 0.5f * peak_threshold) continue;
          if (!is_extremum(dog, o, l, x, y)) continue;

          const Image& lo = dog.at(o, l - 1).image;
          const Image& hi = dog.at(o, l + 1).image;
          // Gradient and Hessian in (x, y, scale) by central differences.
          std::array<double, 3> g = {
              0.5 * (cur.at(x + 1, y) - cur.at(x - 1, y)),
              0.5 * (cur.at(x, y + 1) - cur.at(x, y - 1)),
              0.5 * (hi.at(x, y) - lo.at(x, y))};
          double dxx = cur.at(x + 1, y) - 2.0 * v + cur.at(x - 1, y);
          double dyy = cur.at(x, y + 1) - 2.0 * v + cur.at(x, y - 1);
          double dss = hi.at(x, y) - 2.0 * v + lo.at(x, y);
          double dxy = 0.25 * (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) -
                               cur.at(x + 1, y - 1) + cur.at(x - 1, y - 1));
          double dxs = 0.25 * (hi.at(x + 1, y) - hi.at(x - 1, y) -
                               lo.at(x + 1, y) + lo.at(x - 1, y));
          double dys = 0.25 * (hi.at(x, y + 1) - hi.at(x, y - 1) -
                               lo.at(x, y + 1) + lo.at(x, y - 1));
          std::array<double, 9> h = {dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss};

          std::array<double, 3> off = {0, 0, 0};
          if (!solve3(h, g, off)) continue;
          // Single refinement step; large offsets indicate an unstable point.
          if (std::abs(off[0]) > 0.6 || std::abs(off[1]) > 0.6 || std::abs(off[2]) > 0.6)
            continue;

          double refined = v + 0.5 * (g[0] * off[0] + g[1] * off[1] + g[2] * off[2]);
          if (std::abs(refined) < peak_threshold) continue;

          double tr = dxx + dyy;
          double det = dxx * dyy - dxy * dxy;
          if (det <= 0.0 || tr * tr / det > edge_bound) continue;

          const double cell = static_cast<double>(1 << o);
          Keypoint kp;
          kp.x = static_cast<float>((x + off[0]) * cell);
          kp.y = static_cast<float>((y + off[1]) * cell);
          kp.sigma = static_cast<float>(
              dog.sigma0 *
              std::pow(2.0, o + (l + off[2]) / dog.levels_per_octave));
          kp.response = static_cast<float>(refined);
          keypoints.push_back(kp);
        }
      }
    }
  }
  return keypoints;
}

Keypoint assign_orientation(const ScaleSpace& ss, Keypoint kp) {
  // Nearest scale-space level to the keypoint's sigma.
  const ScaleSpaceLevel* best = &ss.levels.front();
  double best_d = std::abs(std::log(best->sigma / kp.sigma));
  for (const auto& lvl : ss.levels) {
    double d = std::abs(std::log(lvl.sigma / kp.sigma));
    if (d < best_d) {
      best_d = d;
      best = &lvl;
    }
  }
  const Image& img = best->image;
  const double cell = static_cast<double>(1 << best->octave);
  const double cx = kp.x / cell;
  const double cy = kp.y / cell;
  const double sigma_local = kp.sigma / cell;
  const double win = 1.5 * sigma_local;
  const int radius = std::max(1, static_cast<int>(std::lround(3.0 * win)));

  constexpr int kBins = 36;
  std::array<double, kBins> hist = {};
  const int ix = static_cast<int>(std::lround(cx));
  const int iy = static_cast<int>(std::lround(cy));
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      int x = ix + dx, y = iy + dy;
      if (x < 1 || y < 1 || x + 1 >= img.width || y + 1 >= img.height) continue;
      double gx = 0.5 * (img.at(x + 1, y) - img.at(x - 1, y));
      double gy = 0.5 * (img.at(x, y + 1) - img.at(x, y - 1));
      double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double w = std::exp(-(dx * dx + dy * dy) / (2.0 * win * win));
      double ang = std::atan2(gy, gx);  // [-pi, pi]
      int bin = static_cast<int>(std::floor((ang + kPi) / (2.0 * kPi) * kBins));
      bin = std::clamp(bin, 0, kBins - 1);
      hist[bin] += w * mag;
    }
  }

  // Light circular smoothing before peak picking.
  for (int pass = 0; pass < 2; ++pass) {
    std::array<double, kBins> sm;
    for (int b = 0; b < kBins; ++b)
      sm[b] = 0.25 * hist[(b + kBins - 1) % kBins] + 0.5 * hist[b] +
              0.25 * hist[(b + 1) % kBins];
    hist = sm;
  }

  int peak = 0;
  for (int b = 1; b < kBins; ++b)
    if (hist[b] > hist[peak]) peak = b;

  double offset = 0.0;
  double l = hist[(peak + kBins - 1) % kBins];
  double c = hist[peak];
  double r = hist[(peak + 1) % kBins];
  double denom = l - 2.0 * c + r;
  if (std::abs(denom) > 1e-12) offset = std::clamp(0.5 * (l - r) / denom, -0.5, 0.5);

  double ang = (peak + 0.5 + offset) / kBins * 2.0 * kPi - kPi;
  kp.orientation = static_cast<float>(ang);
  return kp;
}

std::vector<Keypoint> detect_keypoints(const Image& gray, const DetectorParams& params) {
  if (gray.channels != 1)
    throw Error(ErrorCode::InvalidArgument, "detect_keypoints: grayscale input required");
  int octaves = params.octaves > 0 ? params.octaves
                                   : default_octaves(gray.width, gray.height);
  ScaleSpace ss = build_scale_space(gray, octaves, params.levels_per_octave, params.sigma0);
  DoGPyramid dog = build_dog(ss);
  return detect(dog, params.peak_threshold, params.edge_threshold);
}

}  // namespace scaleflow
