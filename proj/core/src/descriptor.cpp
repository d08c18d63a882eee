#include "scaleflow/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "scaleflow/error.hpp"
#include "scaleflow/parallel.hpp"
#include "scaleflow/propagation.hpp"
#include "scaleflow/scalespace.hpp"

namespace scaleflow {

namespace {

constexpr float kTwoPi = 6.28318530717958647692f;
constexpr int kSpatialBins = 4;
constexpr int kOrientBins = 8;

struct GradientPlanes {
  int width = 0;
  int height = 0;
  std::vector<float> mag;
  std::vector<float> ang;  // [0, 2pi)
};

GradientPlanes gradient_planes(const Image& blurred) {
  GradientPlanes g;
  g.width = blurred.width;
  g.height = blurred.height;
  const std::size_t n = blurred.pixel_count();
  g.mag.assign(n, 0.0f);
  g.ang.assign(n, 0.0f);
  parallel_for(1, static_cast<std::size_t>(std::max(1, g.height - 1)),
               [&](std::size_t y0, std::size_t y1) {
                 for (std::size_t y = y0; y < y1; ++y)
                   for (int x = 1; x + 1 < g.width; ++x) {
                     std::size_t i = y * g.width + x;
                     float gx = 0.5f * (blurred.at(x + 1, static_cast<int>(y)) -
                                        blurred.at(x - 1, static_cast<int>(y)));
                     float gy =
                         0.5f * (blurred.at(x, static_cast<int>(y) + 1) -
                                 blurred.at(x, static_cast<int>(y) - 1));
                     g.mag[i] = std::sqrt(gx * gx + gy * gy);
                     float a = std::atan2(gy, gx);
                     if (a < 0.0f) a += kTwoPi;
                     g.ang[i] = a;
                   }
               });
  return g;
}

SiftDescriptor extract_core(const GradientPlanes& g, float x, float y, float sigma,
                            float orientation) {
  SiftDescriptor desc;
  const float bin_size = static_cast<float>(kMagnification) * sigma;
  const float c = std::cos(orientation);
  const float s = std::sin(orientation);
  const bool rotated = orientation != 0.0f;
  const float reach = 2.5f * bin_size * (rotated ? 1.41421356f : 1.0f);
  const int x0 = std::max(1, static_cast<int>(std::floor(x - reach)));
  const int x1 = std::min(g.width - 2, static_cast<int>(std::ceil(x + reach)));
  const int y0 = std::max(1, static_cast<int>(std::floor(y - reach)));
  const int y1 = std::min(g.height - 2, static_cast<int>(std::ceil(y + reach)));
  const float inv_bin = 1.0f / bin_size;
  // Gaussian spatial weight, sigma = half the 4-bin window, in bin units.
  const float gauss_denom = 1.0f / (2.0f * 2.0f * 2.0f);

  float hist[kSpatialBins][kSpatialBins][kOrientBins] = {};

  for (int py = y0; py <= y1; ++py) {
    const float dy = py - y;
    for (int px = x0; px <= x1; ++px) {
      const float dx = px - x;
      // Window coordinates in bin units, rotated into the descriptor frame.
      float rx = (c * dx + s * dy) * inv_bin;
      float ry = (-s * dx + c * dy) * inv_bin;
      float u = rx + 1.5f;
      float v = ry + 1.5f;
      if (u <= -1.0f || u >= 4.0f || v <= -1.0f || v >= 4.0f) continue;
      const std::size_t i = static_cast<std::size_t>(py) * g.width + px;
      float mag = g.mag[i];
      if (mag == 0.0f) continue;
      float w = mag * std::exp(-(rx * rx + ry * ry) * gauss_denom);

      float a = g.ang[i] - orientation;
      a -= kTwoPi * std::floor(a / kTwoPi);
      float ob = a * (kOrientBins / kTwoPi);

      int ui = static_cast<int>(std::floor(u));
      int vi = static_cast<int>(std::floor(v));
      int oi = static_cast<int>(std::floor(ob));
      float uf = u - ui;
      float vf = v - vi;
      float of = ob - oi;
      for (int du = 0; du < 2; ++du) {
        int ub = ui + du;
        if (ub < 0 || ub >= kSpatialBins) continue;
        float wu = w * (du == 0 ? 1.0f - uf : uf);
        for (int dv = 0; dv < 2; ++dv) {
          int vb = vi + dv;
          if (vb < 0 || vb >= kSpatialBins) continue;
          float wv = wu * (dv == 0 ? 1.0f - vf : vf);
          for (int dob = 0; dob < 2; ++dob) {
            int obn = (oi + dob) % kOrientBins;
            hist[vb][ub][obn] += wv * (dob == 0 ? 1.0f - of : of);
          }
        }
      }
    }
  }

  float* out = desc.values.data();
  for (int vb = 0; vb < kSpatialBins; ++vb)
    for (int ub = 0; ub < kSpatialBins; ++ub)
      for (int ob = 0; ob < kOrientBins; ++ob) *out++ = hist[vb][ub][ob];

  // Normalize -> clamp 0.2 -> renormalize.
  double norm2 = 0.0;
  for (float f : desc.values) norm2 += static_cast<double>(f) * f;
  if (norm2 < 1e-24) {
    desc.values.fill(0.0f);
    return desc;
  }
  float inv = static_cast<float>(1.0 / std::sqrt(norm2));
  for (float& f : desc.values) f = std::min(f * inv, 0.2f);
  norm2 = 0.0;
  for (float f : desc.values) norm2 += static_cast<double>(f) * f;
  inv = static_cast<float>(1.0 / std::sqrt(norm2));
  for (float& f : desc.values) f *= inv;
  return desc;
}

}  // namespace

SiftDescriptor extract_from_blurred(const Image& blurred, float x, float y,
                                    float sigma, float orientation) {
  if (sigma <= 0.0f)
    throw Error(ErrorCode::InvalidArgument, "descriptor: sigma must be positive");
  if (blurred.channels != 1)
    throw Error(ErrorCode::InvalidArgument, "descriptor: grayscale input required");
  return extract_core(gradient_planes(blurred), x, y, sigma, orientation);
}

std::vector<SiftDescriptor> extract_from_blurred(
    const Image& blurred, const std::vector<std::array<float, 3>>& pts,
    float sigma) {
  if (sigma <= 0.0f)
    throw Error(ErrorCode::InvalidArgument, "descriptor: sigma must be positive");
  if (blurred.channels != 1)
    throw Error(ErrorCode::InvalidArgument, "descriptor: grayscale input required");
  GradientPlanes g = gradient_planes(blurred);
  std::vector<SiftDescriptor> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i)
    out[i] = extract_core(g, pts[i][0], pts[i][1], sigma, pts[i][2]);
  return out;
}

SiftDescriptor extract_at(const Image& gray, float x, float y, float sigma,
                          float orientation) {
  if (sigma <= 0.0f)
    throw Error(ErrorCode::InvalidArgument, "descriptor: sigma must be positive");
  return extract_from_blurred(gaussian_blur(gray, sigma), x, y, sigma, orientation);
}

DenseDescriptorField extract_dense_constant(const Image& gray, float sigma) {
  if (sigma <= 0.0f)
    throw Error(ErrorCode::InvalidArgument, "descriptor: sigma must be positive");
  if (gray.channels != 1)
    throw Error(ErrorCode::InvalidArgument, "descriptor: grayscale input required");
  DenseDescriptorField field;
  field.width = gray.width;
  field.height = gray.height;
  field.scale_source = DenseDescriptorField::ScaleSource::Constant;
  field.data.assign(gray.pixel_count() * kDescriptorDim, 0.0f);

  GradientPlanes g = gradient_planes(gaussian_blur(gray, sigma));
  parallel_for(0, static_cast<std::size_t>(gray.height),
               [&](std::size_t r0, std::size_t r1) {
                 for (std::size_t y = r0; y < r1; ++y)
                   for (int x = 0; x < gray.width; ++x) {
                     SiftDescriptor d = extract_core(
                         g, static_cast<float>(x), static_cast<float>(y), sigma, 0.0f);
                     std::memcpy(field.at(x, static_cast<int>(y)), d.values.data(),
                                 sizeof(float) * kDescriptorDim);
                   }
               });
  return field;
}

DenseDescriptorField extract_dense_mapped(const Image& gray, const ScaleMap& smap) {
  if (gray.channels != 1)
    throw Error(ErrorCode::InvalidArgument, "descriptor: grayscale input required");
  if (smap.width != gray.width || smap.height != gray.height)
    throw Error(ErrorCode::InvalidArgument, "extract_dense_mapped: dims mismatch");
  float smin = std::numeric_limits<float>::max();
  float smax = 0.0f;
  for (float s : smap.scale) {
    if (!(s > 0.0f))
      throw Error(ErrorCode::InvalidArgument, "extract_dense_mapped: non-positive scale");
    smin = std::min(smin, s);
    smax = std::max(smax, s);
  }

  // Log-spaced quantization levels shared across pixels; enough levels to
  // keep the per-pixel sigma error under 6%.
  int levels = 1;
  if (smax > smin * 1.0001f) {
    double ratio = smax / smin;
    levels = std::max(
        10, 1 + static_cast<int>(std::ceil(std::log(ratio) / (2.0 * std::log(1.06)))));
  }
  std::vector<float> level_sigma(levels);
  for (int i = 0; i < levels; ++i)
    level_sigma[i] = levels == 1
                         ? smin
                         : static_cast<float>(smin * std::pow(static_cast<double>(smax) / smin,
                                                              static_cast<double>(i) / (levels - 1)));

  // Nearest level (in log scale) per pixel.
  std::vector<int> level_of(smap.scale.size());
  std::vector<bool> used(levels, false);
  for (std::size_t i = 0; i < smap.scale.size(); ++i) {
    int best = 0;
    if (levels > 1) {
      double t = std::log(smap.scale[i] / smin) /
                 std::log(static_cast<double>(smax) / smin) * (levels - 1);
      best = std::clamp(static_cast<int>(std::lround(t)), 0, levels - 1);
    }
    level_of[i] = best;
    used[best] = true;
  }

  DenseDescriptorField field;
  field.width = gray.width;
  field.height = gray.height;
  field.scale_source = DenseDescriptorField::ScaleSource::ScaleMap;
  field.data.assign(gray.pixel_count() * kDescriptorDim, 0.0f);

  for (int lvl = 0; lvl < levels; ++lvl) {
    if (!used[lvl]) continue;
    GradientPlanes g = gradient_planes(gaussian_blur(gray, level_sigma[lvl]));
    parallel_for(0, static_cast<std::size_t>(gray.height),
                 [&](std::size_t r0, std::size_t r1) {
                   for (std::size_t y = r0; y < r1; ++y)
                     for (int x = 0; x < gray.width; ++x) {
                       std::size_t i = y * gray.width + x;
                       if (level_of[i] != lvl) continue;
                       SiftDescriptor d = extract_core(g, static_cast<float>(x),
                                                       static_cast<float>(y),
                                                       level_sigma[lvl], 0.0f);
                       std::memcpy(field.at(x, static_cast<int>(y)), d.values.data(),
                                   sizeof(float) * kDescriptorDim);
                     }
                 });
  }
  return field;
}

void save_descriptor_field(const DenseDescriptorField& field, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::MissingFile, "cannot open for write: " + tmp);
    std::uint32_t header[3] = {static_cast<std::uint32_t>(field.width),
                               static_cast<std::uint32_t>(field.height),
                               static_cast<std::uint32_t>(kDescriptorDim)};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(field.data.data()),
              static_cast<std::streamsize>(field.data.size() * sizeof(float)));
    if (!out) throw Error(ErrorCode::CorruptStream, "short write: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error(ErrorCode::MissingFile, "cannot write " + path);
  }
}

DenseDescriptorField load_descriptor_field(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "no such file: " + path);
  std::uint32_t header[3];
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || header[2] != kDescriptorDim)
    throw Error(ErrorCode::CorruptStream, "bad descriptor field header: " + path);
  DenseDescriptorField field;
  field.width = static_cast<int>(header[0]);
  field.height = static_cast<int>(header[1]);
  field.data.resize(static_cast<std::size_t>(field.width) * field.height * kDescriptorDim);
  in.read(reinterpret_cast<char*>(field.data.data()),
          static_cast<std::streamsize>(field.data.size() * sizeof(float)));
  if (!in) throw Error(ErrorCode::CorruptStream, "truncated descriptor field: " + path);
  return field;
}

}  // namespace scaleflow
