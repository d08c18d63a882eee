#include "support.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <random>

namespace testsup {

Image sinusoid_texture(int w, int h, unsigned seed, int waves) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> freq(0.03, 0.35);
  std::uniform_real_distribution<double> phase(0.0, 6.28318);
  Image img = scaleflow::Image::zeros(w, h);
  std::vector<std::array<double, 5>> comps;
  for (int i = 0; i < waves; ++i)
    comps.push_back({freq(rng), freq(rng), phase(rng), phase(rng),
                     1.0 / (i + 1.5)});
  double lo = 1e30, hi = -1e30;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = 0.0;
      for (const auto& c : comps)
        v += c[4] * std::sin(c[0] * x + c[2]) * std::cos(c[1] * y + c[3]);
      img.at(x, y) = static_cast<float>(v);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  const double span = hi > lo ? hi - lo : 1.0;
  for (float& v : img.data)
    v = static_cast<float>(0.1 + 0.8 * (v - lo) / span);
  return img;
}

Image blob_texture(int w, int h, unsigned seed, int blobs) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> px(0.08, 0.92);
  std::uniform_real_distribution<double> size(1.5, 6.0);
  std::uniform_real_distribution<double> amp(0.25, 0.45);
  std::bernoulli_distribution sign(0.5);
  Image img = scaleflow::Image::zeros(w, h);
  std::fill(img.data.begin(), img.data.end(), 0.5f);
  for (int i = 0; i < blobs; ++i) {
    double cx = px(rng) * w, cy = px(rng) * h;
    double s = size(rng);
    double a = amp(rng) * (sign(rng) ? 1.0 : -1.0);
    int r = static_cast<int>(std::ceil(3.5 * s));
    for (int y = std::max(0, static_cast<int>(cy) - r);
         y <= std::min(h - 1, static_cast<int>(cy) + r); ++y)
      for (int x = std::max(0, static_cast<int>(cx) - r);
           x <= std::min(w - 1, static_cast<int>(cx) + r); ++x) {
        double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        img.at(x, y) += static_cast<float>(a * std::exp(-d2 / (2.0 * s * s)));
      }
  }
  for (float& v : img.data) v = std::clamp(v, 0.0f, 1.0f);
  return img;
}

Image rich_texture(int w, int h, unsigned seed) {
  Image blobs = blob_texture(w, h, seed, std::max(12, w * h / 900));
  Image waves = sinusoid_texture(w, h, seed + 101, 8);
  Image img = scaleflow::Image::zeros(w, h);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = std::clamp(0.75f * blobs.data[i] + 0.25f * waves.data[i],
                             0.0f, 1.0f);
  return img;
}

Image shift_image(const Image& img, double dx, double dy) {
  Image out = scaleflow::Image::zeros(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = scaleflow::sample_bilinear(
            img, static_cast<float>(x - dx), static_cast<float>(y - dy), c);
  return out;
}

std::string temp_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  static std::mt19937_64 rng(std::random_device{}());
  fs::path dir = fs::temp_directory_path() /
                 ("scaleflow_" + tag + "_" + std::to_string(rng()));
  fs::create_directories(dir);
  return dir.string();
}

}  // namespace testsup
