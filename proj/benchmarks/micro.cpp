// Micro-benchmarks for the hot paths: blur, dense extraction, propagation
// solve, and a single flow level. Run with --benchmark_filter=... to narrow.

#include <cmath>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "scaleflow/descriptor.hpp"
#include "scaleflow/flow.hpp"
#include "scaleflow/image.hpp"
#include "scaleflow/propagation.hpp"
#include "scaleflow/scalespace.hpp"
#include "scaleflow/solver.hpp"

namespace {

scaleflow::Image texture(int width, int height, unsigned seed) {
  scaleflow::Image img(width, height, 1);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> freq(0.05f, 0.5f);
  std::uniform_real_distribution<float> phase(0.0f, 6.28f);
  float fx1 = freq(rng), fy1 = freq(rng), fx2 = freq(rng), fy2 = freq(rng);
  float p1 = phase(rng), p2 = phase(rng);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      float v = std::sin(fx1 * x + fy1 * y + p1) * std::cos(fx2 * x - fy2 * y + p2);
      img.data[static_cast<std::size_t>(y) * width + x] = 0.5f + 0.4f * v;
    }
  return img;
}

void bm_gaussian_blur(benchmark::State& state) {
  scaleflow::Image img = texture(static_cast<int>(state.range(0)),
                                 static_cast<int>(state.range(0)), 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(scaleflow::gaussian_blur(img, 2.0));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(bm_gaussian_blur)->Arg(128)->Arg(512);

void bm_dense_descriptors(benchmark::State& state) {
  scaleflow::Image img = texture(static_cast<int>(state.range(0)),
                                 static_cast<int>(state.range(0)), 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(scaleflow::extract_dense_constant(img, 8.0f / 3.0f));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * state.range(0));
}
BENCHMARK(bm_dense_descriptors)->Arg(64)->Arg(256);

void bm_propagation_solve(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  scaleflow::Image img = texture(n, n, 3);
  scaleflow::StencilField w = scaleflow::ncc_weights(img);
  std::mt19937 rng(4);
  std::uniform_int_distribution<int> pix(0, n * n - 1);
  std::uniform_real_distribution<double> val(1.0, 8.0);
  std::vector<std::pair<int, double>> seeds;
  for (int i = 0; i < n; ++i) seeds.emplace_back(pix(rng), val(rng));
  for (auto _ : state) {
    scaleflow::SparseSystem sys = scaleflow::assemble(n, n, w, seeds);
    benchmark::DoNotOptimize(scaleflow::solve(sys));
  }
}
BENCHMARK(bm_propagation_solve)->Arg(64)->Arg(128);

void bm_flow_level(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  scaleflow::Image a = texture(n, n, 5);
  scaleflow::Image b = texture(n, n, 6);
  scaleflow::DenseDescriptorField fa = scaleflow::extract_dense_constant(a, 8.0f / 3.0f);
  scaleflow::DenseDescriptorField fb = scaleflow::extract_dense_constant(b, 8.0f / 3.0f);
  scaleflow::FlowParams prm;
  prm.levels = 1;
  prm.radius = 3;
  prm.iterations = 4;
  for (auto _ : state) {
    benchmark::DoNotOptimize(scaleflow::estimate_flow(fa, fb, prm));
  }
}
BENCHMARK(bm_flow_level)->Arg(48)->Arg(96);

}  // namespace

BENCHMARK_MAIN();
