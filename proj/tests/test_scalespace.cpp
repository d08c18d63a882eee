#include <cmath>

#include <doctest.h>

#include "scaleflow/scalespace.hpp"
#include "support.hpp"

using namespace scaleflow;

TEST_CASE("blur of a constant image is the identity") {
  Image img = Image::zeros(15, 15);
  std::fill(img.data.begin(), img.data.end(), 0.42f);
  for (double s : {0.8, 2.0, 5.0}) {
    Image out = gaussian_blur(img, s);
    for (float v : out.data) CHECK(v == doctest::Approx(0.42f).epsilon(1e-6));
  }
}

TEST_CASE("impulse response matches the closed-form kernel peak") {
  Image img = Image::zeros(21, 21);
  img.at(10, 10) = 1.0f;
  Image out = gaussian_blur(img, 1.0);
  // G(0,0,1) = 1 / (2 pi)
  CHECK(out.at(10, 10) == doctest::Approx(1.0 / (2.0 * 3.14159265358979)).epsilon(1e-3));
}

TEST_CASE("Gaussian semigroup property on smooth images") {
  Image img = testsup::sinusoid_texture(48, 40, 11, 4);
  Image twice = gaussian_blur(gaussian_blur(img, 1.2), 1.6);
  Image once = gaussian_blur(img, std::sqrt(1.2 * 1.2 + 1.6 * 1.6));
  float max_diff = 0.0f;
  for (std::size_t i = 0; i < img.data.size(); ++i)
    max_diff = std::max(max_diff, std::abs(twice.data[i] - once.data[i]));
  CHECK(max_diff < 1e-3f);
}

TEST_CASE("blur preserves the value range") {
  Image img = testsup::blob_texture(33, 29, 8);
  float lo = 1.0f, hi = 0.0f;
  for (float v : img.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Image out = gaussian_blur(img, 3.0);
  for (float v : out.data) {
    CHECK(v >= lo - 1e-6f);
    CHECK(v <= hi + 1e-6f);
  }
}

TEST_CASE("scale space octave dimensions halve") {
  Image img = testsup::sinusoid_texture(64, 64, 2);
  ScaleSpace ss = build_scale_space(img, 3, 3, 1.6);
  CHECK(ss.octaves == 3);
  int expect = 64;
  for (int o = 0; o < 3; ++o) {
    const Image& base = ss.at(o, 0).image;
    CHECK(base.width == expect);
    CHECK(base.height == expect);
    expect /= 2;
  }
}

TEST_CASE("sigma schedule follows sigma0 * 2^(o + s/levels)") {
  Image img = testsup::sinusoid_texture(64, 64, 2);
  ScaleSpace ss = build_scale_space(img, 2, 3, 1.6);
  for (const auto& lvl : ss.levels) {
    double expect = 1.6 * std::pow(2.0, lvl.octave + lvl.level / 3.0);
    CHECK(lvl.sigma == doctest::Approx(expect).epsilon(1e-9));
  }
  // level 1 of octave 0: 1.6 * 2^(1/3) ~= 2.016
  CHECK(ss.at(0, 1).image.width == 64);
  bool found = false;
  for (const auto& lvl : ss.levels)
    if (lvl.octave == 0 && lvl.level == 1) {
      CHECK(lvl.sigma == doctest::Approx(2.0159).epsilon(1e-3));
      found = true;
    }
  CHECK(found);
}

TEST_CASE("too many octaves for a small image is an error") {
  Image img = testsup::sinusoid_texture(16, 16, 3);
  CHECK_THROWS(build_scale_space(img, 8, 3, 1.6));
}

TEST_CASE("DoG of a constant image is zero with n-1 layers per octave") {
  Image img = Image::zeros(64, 64);
  std::fill(img.data.begin(), img.data.end(), 0.5f);
  ScaleSpace ss = build_scale_space(img, 2, 3, 1.6);
  DoGPyramid dog = build_dog(ss);
  // 3 levels per octave keeps 3 + 3 auxiliary Gaussians -> 5 differences.
  int count0 = 0;
  for (const auto& layer : dog.layers) {
    if (layer.octave == 0) ++count0;
    for (float v : layer.image.data) CHECK(std::abs(v) < 1e-6f);
  }
  CHECK(count0 == 5);
}

TEST_CASE("DoG impulse center equals the closed-form kernel difference") {
  Image img = Image::zeros(65, 65);
  img.at(32, 32) = 1.0f;
  ScaleSpace ss = build_scale_space(img, 1, 3, 1.6);
  DoGPyramid dog = build_dog(ss);
  const auto& layer = dog.layers[0];
  // Input carries an assumed pre-blur; the effective kernels include it.
  const double pre = kInitialBlur;
  double s1 = std::sqrt(ss.levels[0].sigma * ss.levels[0].sigma - pre * pre);
  double s2 = std::sqrt(ss.levels[1].sigma * ss.levels[1].sigma - pre * pre);
  double expect = 1.0 / (2.0 * 3.14159265358979 * s2 * s2) -
                  1.0 / (2.0 * 3.14159265358979 * s1 * s1);
  CHECK(layer.image.at(32, 32) == doctest::Approx(expect).epsilon(5e-3));
}
