#include "scaleflow/scalespace.hpp"

#include <algorithm>
#include <cmath>

#include "scaleflow/error.hpp"
#include "scaleflow/parallel.hpp"

namespace scaleflow {

namespace {

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<float> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
    k[i + radius] = static_cast<float>(v);
    sum += v;
  }
  const float inv = static_cast<float>(1.0 / sum);
  for (float& v : k) v *= inv;
  return k;
}

// Mirror without repeating the edge sample (reflect-101).
inline int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = std::abs(i) % period;
  return i < n ? i : period - i;
}

Image downsample2(const Image& img) {
  int w = std::max(1, img.width / 2);
  int h = std::max(1, img.height / 2);
  Image out = Image::zeros(w, h, img.channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < img.channels; ++c) out.at(x, y, c) = img.at(2 * x, 2 * y, c);
  return out;
}

}  // namespace

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma <= 0.0) throw Error(ErrorCode::InvalidArgument, "gaussian_blur: sigma <= 0");
  const std::vector<float> k = gaussian_kernel(sigma);
  const int radius = (static_cast<int>(k.size()) - 1) / 2;
  const int w = img.width, h = img.height, ch = img.channels;

  Image tmp = Image::zeros(w, h, ch);
  parallel_for(0, static_cast<std::size_t>(h), [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < ch; ++c) {
          float acc = 0.0f;
          for (int i = -radius; i <= radius; ++i)
            acc += k[i + radius] * img.at(reflect(x + i, w), static_cast<int>(y), c);
          tmp.at(x, static_cast<int>(y), c) = acc;
        }
  });

  Image out = Image::zeros(w, h, ch);
  parallel_for(0, static_cast<std::size_t>(h), [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < ch; ++c) {
          float acc = 0.0f;
          for (int i = -radius; i <= radius; ++i)
            acc += k[i + radius] * tmp.at(x, reflect(static_cast<int>(y) + i, h), c);
          out.at(x, static_cast<int>(y), c) = acc;
        }
  });
  return out;
}

int default_octaves(int width, int height) {
  int o = 1;
  int d = std::min(width, height);
  while (d / 2 >= 8) {
    d /= 2;
    ++o;
  }
  return o;
}

ScaleSpace build_scale_space(const Image& gray, int octaves, int levels_per_octave,
                             double sigma0) {
  if (octaves < 1 || levels_per_octave < 3 || sigma0 <= 0.0)
    throw Error(ErrorCode::InvalidArgument, "build_scale_space: bad parameters");
  if ((std::min(gray.width, gray.height) >> (octaves - 1)) < 8)
    throw Error(ErrorCode::InvalidArgument,
                "build_scale_space: image too small for requested octaves");

  ScaleSpace ss;
  ss.octaves = octaves;
  ss.levels_per_octave = levels_per_octave;
  ss.sigma0 = sigma0;
  const int gpo = ss.gaussians_per_octave();
  ss.levels.reserve(static_cast<std::size_t>(octaves) * gpo);

  // Per-octave sigma ladder in the octave's own sampling units.
  std::vector<double> local_sigma(gpo);
  for (int s = 0; s < gpo; ++s)
    local_sigma[s] = sigma0 * std::pow(2.0, static_cast<double>(s) / levels_per_octave);

  Image base;
  {
    double delta2 = sigma0 * sigma0 - kInitialBlur * kInitialBlur;
    base = delta2 > 1e-8 ? gaussian_blur(gray, std::sqrt(delta2)) : gray;
  }

  for (int o = 0; o < octaves; ++o) {
    Image current = std::move(base);
    for (int s = 0; s < gpo; ++s) {
      if (s > 0) {
        double delta2 = local_sigma[s] * local_sigma[s] - local_sigma[s - 1] * local_sigma[s - 1];
        current = gaussian_blur(current, std::sqrt(delta2));
      }
      ScaleSpaceLevel lvl;
      lvl.octave = o;
      lvl.level = s;
      lvl.sigma = sigma0 * std::pow(2.0, o + static_cast<double>(s) / levels_per_octave);
      lvl.image = current;
      ss.levels.push_back(std::move(lvl));
    }
    if (o + 1 < octaves) {
      // Level at 2x the octave base sigma seeds the next octave.
      base = downsample2(ss.at(o, levels_per_octave).image);
    }
  }
  return ss;
}

DoGPyramid build_dog(const ScaleSpace& ss) {
  DoGPyramid dog;
  dog.octaves = ss.octaves;
  dog.levels_per_octave = ss.levels_per_octave;
  dog.sigma0 = ss.sigma0;
  const int gpo = ss.gaussians_per_octave();
  dog.layers.reserve(static_cast<std::size_t>(ss.octaves) * (gpo - 1));
  for (int o = 0; o < ss.octaves; ++o) {
    for (int s = 0; s + 1 < gpo; ++s) {
      const Image& lo = ss.at(o, s).image;
      const Image& hi = ss.at(o, s + 1).image;
      ScaleSpaceLevel layer;
      layer.octave = o;
      layer.level = s;
      layer.sigma = ss.at(o, s).sigma;
      layer.image = Image::zeros(lo.width, lo.height, 1);
      for (std::size_t i = 0; i < layer.image.data.size(); ++i)
        layer.image.data[i] = hi.data[i] - lo.data[i];
      dog.layers.push_back(std::move(layer));
    }
  }
  return dog;
}

}  // namespace scaleflow
