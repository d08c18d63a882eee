#include <cmath>
#include <random>

#include <doctest.h>

#include "scaleflow/descriptor.hpp"
#include "scaleflow/flow.hpp"
#include "support.hpp"

using namespace scaleflow;

namespace {

DenseDescriptorField random_field(int w, int h, unsigned seed) {
  DenseDescriptorField f;
  f.width = w;
  f.height = h;
  f.data.resize(static_cast<std::size_t>(w) * h * kDescriptorDim);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int p = 0; p < w * h; ++p) {
    float* d = f.data.data() + static_cast<std::size_t>(p) * kDescriptorDim;
    double norm2 = 0.0;
    for (int c = 0; c < kDescriptorDim; ++c) {
      d[c] = u(rng);
      norm2 += static_cast<double>(d[c]) * d[c];
    }
    float inv = static_cast<float>(1.0 / std::sqrt(norm2));
    for (int c = 0; c < kDescriptorDim; ++c) d[c] *= inv;
  }
  return f;
}

}  // namespace

#include "oracles.hpp"

TEST_CASE("data cost basics") {
  DenseDescriptorField f = random_field(4, 3, 1);
  CHECK(data_cost(f, f, 1, 1, 0, 0, 2.0) == doctest::Approx(0.0));
  // displacement leaving the target costs exactly k
  CHECK(data_cost(f, f, 3, 2, 5, 0, 2.0) == doctest::Approx(2.0));

  // disjoint single-bin unit descriptors: L1 distance 2
  DenseDescriptorField a, b;
  a.width = b.width = 1;
  a.height = b.height = 1;
  a.data.assign(kDescriptorDim, 0.0f);
  b.data.assign(kDescriptorDim, 0.0f);
  a.data[0] = 1.0f;
  b.data[1] = 1.0f;
  CHECK(data_cost(a, b, 0, 0, 0, 0, 10.0) == doctest::Approx(2.0));
  CHECK(data_cost(a, b, 0, 0, 0, 0, 1.5) == doctest::Approx(1.5));
}

TEST_CASE("identical fields give the zero flow with zero energy") {
  DenseDescriptorField f = random_field(16, 12, 7);
  FlowParams prm;
  prm.levels = 1;
  prm.radius = 2;
  FlowField flow = estimate_flow(f, f, prm);
  for (std::size_t i = 0; i < flow.u.size(); ++i) {
    CHECK(flow.u[i] == 0.0f);
    CHECK(flow.v[i] == 0.0f);
  }
  CHECK(flow.energy == doctest::Approx(0.0));
}

TEST_CASE("estimate_flow rejects mismatched dimensions") {
  DenseDescriptorField a = random_field(8, 8, 1);
  DenseDescriptorField b = random_field(9, 8, 2);
  CHECK_THROWS(estimate_flow(a, b, FlowParams{}));
}

TEST_CASE("recovers a known (5, 0) shift on textured input") {
  Image img = testsup::rich_texture(64, 48, 33);
  Image shifted = testsup::shift_image(img, 5.0, 0.0);
  DenseDescriptorField fa =
      extract_dense_constant(img, static_cast<float>(kDefaultScale));
  DenseDescriptorField fb =
      extract_dense_constant(shifted, static_cast<float>(kDefaultScale));
  FlowParams prm;
  prm.levels = 1;
  prm.radius = 6;
  FlowField flow = estimate_flow(fa, fb, prm);
  int hits = 0, total = 0;
  for (int y = 8; y < 40; ++y)
    for (int x = 8; x < 48; ++x) {
      ++total;
      if (flow.u[flow.index(x, y)] == 5.0f && flow.v[flow.index(x, y)] == 0.0f)
        ++hits;
    }
  CHECK(hits >= static_cast<int>(0.9 * total));
}

TEST_CASE("reported energy matches the standalone evaluator") {
  DenseDescriptorField fa = random_field(10, 8, 21);
  DenseDescriptorField fb = random_field(10, 8, 22);
  FlowParams prm;
  prm.levels = 1;
  prm.radius = 2;
  FlowField flow = estimate_flow(fa, fb, prm);
  CHECK(flow.energy ==
        doctest::Approx(flow_energy(fa, fb, flow, prm)).epsilon(1e-9));
}

TEST_CASE("single-row problems attain the exact chain-DP minimum") {
  for (int t = 0; t < 30; ++t) {
    DenseDescriptorField fa = random_field(64, 1, 100 + 2 * t);
    DenseDescriptorField fb = random_field(64, 1, 101 + 2 * t);
    FlowParams prm;
    prm.levels = 1;
    prm.radius = 1;
    prm.iterations = 10;
    FlowField flow = estimate_flow(fa, fb, prm);
    double oracle = testsup::chain_dp_minimum(fa, fb, prm);
    CHECK(flow.energy == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("energy upper-bounds on a toy 2D problem") {
  // fb is fa shifted by one column; the optimizer must do at least as well
  // as both the zero flow and the planted shift.
  Image img = testsup::rich_texture(32, 32, 9);
  Image shifted = testsup::shift_image(img, 1.0, 0.0);
  DenseDescriptorField fa =
      extract_dense_constant(img, static_cast<float>(kDefaultScale));
  DenseDescriptorField fb =
      extract_dense_constant(shifted, static_cast<float>(kDefaultScale));
  FlowParams prm;
  prm.levels = 1;
  prm.radius = 1;
  FlowField flow = estimate_flow(fa, fb, prm);

  FlowField zero = FlowField::zeros(32, 32);
  FlowField planted = FlowField::zeros(32, 32);
  std::fill(planted.u.begin(), planted.u.end(), 1.0f);
  CHECK(flow.energy <= flow_energy(fa, fb, zero, prm) + 1e-6);
  CHECK(flow.energy <= flow_energy(fa, fb, planted, prm) + 1e-6);
}

TEST_CASE("optimization is deterministic") {
  DenseDescriptorField fa = random_field(20, 16, 55);
  DenseDescriptorField fb = random_field(20, 16, 56);
  FlowParams prm;
  prm.levels = 2;
  prm.radius = 2;
  FlowField f1 = estimate_flow(fa, fb, prm);
  FlowField f2 = estimate_flow(fa, fb, prm);
  CHECK(f1.energy == f2.energy);
  for (std::size_t i = 0; i < f1.u.size(); ++i) {
    CHECK(f1.u[i] == f2.u[i]);
    CHECK(f1.v[i] == f2.v[i]);
  }
}

TEST_CASE("continuation recovers displacements far beyond the window reach") {
  // b is a half-size rendering of a padded with zeros: the true displacement
  // u(p) = -p/2 reaches -48, well beyond radius * (2^levels - 1) = 28, and is
  // only reachable through the data-supported affine re-anchoring passes.
  Image img = testsup::rich_texture(96, 96, 17);
  Image small = resize(img, 0.5);
  Image b = Image::zeros(96, 96, 1);
  Image gray = to_grayscale(small);
  for (int y = 0; y < gray.height; ++y)
    for (int x = 0; x < gray.width; ++x) b.at(x, y) = gray.at(x, y);
  ScaleMap ma, mb;
  ma.width = mb.width = 96;
  ma.height = mb.height = 96;
  ma.scale.assign(96 * 96, 2.0f * static_cast<float>(kDefaultScale));
  mb.scale.assign(96 * 96, static_cast<float>(kDefaultScale));
  DenseDescriptorField fa = extract_dense_mapped(to_grayscale(img), ma);
  DenseDescriptorField fb = extract_dense_mapped(b, mb);
  FlowParams prm;
  prm.levels = 3;
  prm.radius = 4;
  FlowField flow = estimate_flow(fa, fb, prm);
  // score the region whose targets' descriptor footprints stay inside the
  // half-size content (beyond it the padding edge corrupts the descriptors)
  double err = 0.0;
  int n = 0;
  for (int y = 4; y < 52; ++y)
    for (int x = 4; x < 52; ++x) {
      double tu = (x + 0.5) * 0.5 - 0.5 - x, tv = (y + 0.5) * 0.5 - 0.5 - y;
      err += std::hypot(flow.u[flow.index(x, y)] - tu, flow.v[flow.index(x, y)] - tv);
      ++n;
    }
  CHECK(err / n < 1.0);
}

TEST_CASE("pipeline identity gives zero flow for every method") {
  Image img = testsup::rich_texture(72, 56, 11);
  PipelineOptions opt;
  opt.flow.levels = 2;
  for (PipelineMethod m : {PipelineMethod::DSift, PipelineMethod::Geometric,
                           PipelineMethod::ImageAware, PipelineMethod::MatchAware}) {
    PipelineResult res = pipeline(img, img, m, opt);
    for (std::size_t i = 0; i < res.flow.u.size(); ++i) {
      CHECK(res.flow.u[i] == 0.0f);
      CHECK(res.flow.v[i] == 0.0f);
    }
  }
}

TEST_CASE("pipeline pads mismatched image sizes") {
  Image a = testsup::rich_texture(60, 48, 8);
  Image b = testsup::rich_texture(52, 40, 8);
  PipelineOptions opt;
  opt.flow.levels = 1;
  opt.flow.iterations = 4;
  PipelineResult res = pipeline(a, b, PipelineMethod::DSift, opt);
  CHECK(res.flow.width == 60);
  CHECK(res.flow.height == 48);
}
