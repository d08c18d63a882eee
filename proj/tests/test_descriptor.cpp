#include <cmath>
#include <filesystem>
#include <random>

#include <doctest.h>

#include "scaleflow/descriptor.hpp"
#include "scaleflow/propagation.hpp"
#include "support.hpp"

using namespace scaleflow;

namespace {

double l2_norm(const SiftDescriptor& d) {
  double s = 0.0;
  for (float v : d.values) s += static_cast<double>(v) * v;
  return std::sqrt(s);
}

double l2_dist(const float* a, const float* b) {
  double s = 0.0;
  for (int i = 0; i < kDescriptorDim; ++i) {
    double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("constant image gives the all-zero descriptor") {
  Image img = Image::zeros(64, 64);
  std::fill(img.data.begin(), img.data.end(), 0.5f);
  SiftDescriptor d = extract_at(img, 32.0f, 32.0f, static_cast<float>(kDefaultScale), 0.0f);
  for (float v : d.values) CHECK(v == 0.0f);
}

TEST_CASE("descriptors are unit norm, non-negative, clamped") {
  std::mt19937 rng(99);
  std::uniform_real_distribution<float> pos(10.0f, 53.0f);
  std::uniform_real_distribution<float> sig(1.0f, 6.0f);
  std::uniform_real_distribution<float> ang(0.0f, 6.28f);
  int nonzero = 0;
  for (int i = 0; i < 1000; ++i) {
    Image img = testsup::sinusoid_texture(64, 64, 1000 + i % 25, 5);
    SiftDescriptor d = extract_at(img, pos(rng), pos(rng), sig(rng), ang(rng));
    double n = l2_norm(d);
    if (n == 0.0) continue;
    ++nonzero;
    CHECK(n == doctest::Approx(1.0).epsilon(1e-6));
    float max_c = 0.0f;
    for (float v : d.values) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      max_c = std::max(max_c, v);
    }
    // clamp at 0.2 before the final renormalization bounds every component
    CHECK(max_c <= 0.2f / 0.45f);
  }
  CHECK(nonzero > 900);
}

TEST_CASE("dense constant extraction matches the pointwise path") {
  Image img = testsup::rich_texture(48, 36, 55);
  const float sigma = static_cast<float>(kDefaultScale);
  DenseDescriptorField field = extract_dense_constant(img, sigma);
  REQUIRE(field.width == 48);
  REQUIRE(field.height == 36);
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> xs(0, 47), ys(0, 35);
  for (int i = 0; i < 60; ++i) {
    int x = xs(rng), y = ys(rng);
    SiftDescriptor point = extract_at(img, static_cast<float>(x),
                                      static_cast<float>(y), sigma, 0.0f);
    const float* dense = field.at(x, y);
    for (int c = 0; c < kDescriptorDim; ++c)
      CHECK(std::abs(dense[c] - point.values[c]) < 1e-6f);
  }
}

TEST_CASE("mapped extraction with a constant map equals constant extraction") {
  Image img = testsup::rich_texture(40, 32, 77);
  ScaleMap smap = ScaleMap::constant(40, 32, static_cast<float>(kDefaultScale));
  DenseDescriptorField a = extract_dense_mapped(img, smap);
  DenseDescriptorField b = extract_dense_constant(img, static_cast<float>(kDefaultScale));
  REQUIRE(a.data.size() == b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i)
    CHECK(std::abs(a.data[i] - b.data[i]) < 1e-6f);
}

TEST_CASE("mapped extraction rejects non-positive scales") {
  Image img = testsup::sinusoid_texture(16, 16, 1);
  ScaleMap smap = ScaleMap::constant(16, 16, 2.0f);
  smap.scale[40] = 0.0f;
  CHECK_THROWS(extract_dense_mapped(img, smap));
}

TEST_CASE("scale noise in the map changes descriptors") {
  Image img = testsup::rich_texture(40, 32, 13);
  ScaleMap clean = ScaleMap::constant(40, 32, static_cast<float>(kDefaultScale));
  ScaleMap noisy = clean;
  std::mt19937 rng(5);
  std::normal_distribution<float> noise(0.0f, 2.0f);
  std::vector<int> touched;
  for (int i = 0; i < 80; ++i) {
    int p = static_cast<int>(rng() % noisy.scale.size());
    float s = std::clamp(noisy.scale[p] + noise(rng), 0.5f, 24.0f);
    if (std::abs(s - noisy.scale[p]) > 0.5f) {
      noisy.scale[p] = s;
      touched.push_back(p);
    }
  }
  REQUIRE(!touched.empty());
  DenseDescriptorField fc = extract_dense_mapped(img, clean);
  DenseDescriptorField fn = extract_dense_mapped(img, noisy);
  int changed = 0;
  for (int p : touched) {
    int x = p % 40, y = p / 40;
    if (l2_dist(fc.at(x, y), fn.at(x, y)) > 1e-4) ++changed;
  }
  CHECK(changed > static_cast<int>(touched.size()) / 2);
}

TEST_CASE("scale covariance under 2x upsampling") {
  int pass = 0;
  for (int t = 0; t < 20; ++t) {
    Image img = testsup::rich_texture(64, 64, 500 + t);
    Image big = resize(img, 2.0);
    const float sigma = 3.0f;
    SiftDescriptor d1 = extract_at(img, 32.0f, 32.0f, sigma, 0.0f);
    SiftDescriptor d2 = extract_at(big, 64.5f, 64.5f, 2.0f * sigma, 0.0f);
    double dist = 0.0;
    for (int i = 0; i < kDescriptorDim; ++i) {
      double d = static_cast<double>(d1.values[i]) - d2.values[i];
      dist += d * d;
    }
    if (std::sqrt(dist) < 0.3) ++pass;
  }
  CHECK(pass == 20);
}

TEST_CASE("covariance against a 2x downsampled image with halved map") {
  Image img = testsup::rich_texture(80, 64, 91);
  Image small = resize(img, 0.5);
  ScaleMap smap_full = ScaleMap::constant(80, 64, 4.0f);
  ScaleMap smap_half = ScaleMap::constant(small.width, small.height, 2.0f);
  DenseDescriptorField ff = extract_dense_mapped(img, smap_full);
  DenseDescriptorField fh = extract_dense_mapped(small, smap_half);
  double total = 0.0;
  int count = 0;
  for (int y = 4; y < small.height - 4; ++y)
    for (int x = 4; x < small.width - 4; ++x) {
      total += l2_dist(ff.at(2 * x, 2 * y), fh.at(x, y));
      ++count;
    }
  CHECK(total / count < 0.35);
}

TEST_CASE("descriptor field binary dump round-trips") {
  namespace fs = std::filesystem;
  Image img = testsup::rich_texture(24, 20, 3);
  DenseDescriptorField field =
      extract_dense_constant(img, static_cast<float>(kDefaultScale));
  std::string dir = testsup::temp_dir("desc");
  std::string path = dir + "/f.bin";
  save_descriptor_field(field, path);
  DenseDescriptorField back = load_descriptor_field(path);
  REQUIRE(back.width == field.width);
  REQUIRE(back.height == field.height);
  REQUIRE(back.data.size() == field.data.size());
  for (std::size_t i = 0; i < field.data.size(); ++i)
    CHECK(back.data[i] == field.data[i]);
  fs::remove_all(dir);
}
