#include <cmath>
#include <random>

#include <doctest.h>

#include "scaleflow/error.hpp"
#include "scaleflow/propagation.hpp"
#include "scaleflow/solver.hpp"
#include "support.hpp"

using namespace scaleflow;

#include "oracles.hpp"

TEST_CASE("1x3 uniform system interpolates the midpoint") {
  StencilField w = uniform_weights(3, 1);
  std::vector<std::pair<int, double>> seeds = {{0, 1.0}, {2, 3.0}};
  SparseSystem sys = assemble(3, 1, w, seeds);
  CHECK(sys.n == 1);
  SolveResult res = solve(sys);
  CHECK(res.values[0] == doctest::Approx(1.0));
  CHECK(res.values[2] == doctest::Approx(3.0));
  CHECK(res.values[1] == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("all pixels seeded yields an empty system") {
  StencilField w = uniform_weights(2, 2);
  std::vector<std::pair<int, double>> seeds = {{0, 1.0}, {1, 2.0}, {2, 3.0}, {3, 4.0}};
  SparseSystem sys = assemble(2, 2, w, seeds);
  CHECK(sys.n == 0);
  SolveResult res = solve(sys);
  CHECK(res.values[0] == 1.0f);
  CHECK(res.values[3] == 4.0f);
}

TEST_CASE("no seeds is an error") {
  StencilField w = uniform_weights(4, 4);
  CHECK_THROWS_AS(assemble(4, 4, w, {}), Error);
}

TEST_CASE("seed outside the image is an error") {
  StencilField w = uniform_weights(4, 4);
  CHECK_THROWS_AS(assemble(4, 4, w, {{99, 1.0}}), Error);
}

TEST_CASE("equal seeds give a constant field") {
  StencilField w = uniform_weights(9, 7);
  std::vector<std::pair<int, double>> seeds = {{0, 2.5}, {35, 2.5}, {62, 2.5}};
  SparseSystem sys = assemble(9, 7, w, seeds);
  SolveResult res = solve(sys, 1e-10);
  for (double v : res.values) CHECK(v == doctest::Approx(2.5).epsilon(1e-9));
}

TEST_CASE("CG matches the dense oracle on 50 random 10x10 systems") {
  std::mt19937 rng(4242);
  for (int t = 0; t < 50; ++t) {
    const int W = 10, H = 10;
    // mix of uniform and image-aware stencils
    StencilField w;
    if (t % 2 == 0) {
      w = uniform_weights(W, H);
    } else {
      Image img = testsup::sinusoid_texture(W, H, 9000 + t, 4);
      w = ncc_weights(img);
    }
    std::uniform_int_distribution<int> pix(0, W * H - 1);
    std::uniform_real_distribution<double> val(0.5, 8.0);
    std::uniform_int_distribution<int> nseeds(2, 12);
    std::vector<std::pair<int, double>> seeds;
    std::vector<bool> used(W * H, false);
    int want = nseeds(rng);
    while (static_cast<int>(seeds.size()) < want) {
      int p = pix(rng);
      if (used[p]) continue;
      used[p] = true;
      seeds.push_back({p, val(rng)});
    }
    SparseSystem sys = assemble(W, H, w, seeds);
    SolveResult res = solve(sys, 1e-10);
    std::vector<double> oracle = testsup::dense_solve_oracle(W, H, w, seeds);
    double max_diff = 0.0;
    for (int p = 0; p < W * H; ++p)
      max_diff = std::max(max_diff, std::abs(res.values[p] - oracle[p]));
    CHECK(max_diff < 1e-5);

    if (t % 2 == 0) {
      // discrete maximum principle under uniform weights
      double lo = 1e30, hi = -1e30;
      for (auto [p, v] : seeds) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      for (double v : res.values) {
        CHECK(v >= lo - 1e-6);
        CHECK(v <= hi + 1e-6);
      }
    }
  }
}

TEST_CASE("solution is a local optimum of the propagation cost") {
  const int W = 8, H = 8;
  Image img = testsup::sinusoid_texture(W, H, 17, 4);
  StencilField w = ncc_weights(img);
  std::vector<std::pair<int, double>> seeds = {{0, 1.0}, {27, 4.0}, {63, 2.0}};
  SparseSystem sys = assemble(W, H, w, seeds);
  SolveResult res = solve(sys, 1e-10);
  double base = propagation_cost(sys, w, res.values);
  std::mt19937 rng(7);
  std::normal_distribution<double> nudge(0.0, 0.05);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> perturbed = res.values;
    for (int p = 0; p < W * H; ++p)
      if (sys.free_index[p] >= 0) perturbed[p] += nudge(rng);
    CHECK(propagation_cost(sys, w, perturbed) >= base - 1e-12);
  }
}

TEST_CASE("assembled rows stay sparse and seeds are returned exactly") {
  StencilField w = uniform_weights(12, 9);
  std::vector<std::pair<int, double>> seeds = {{5, 1.25}, {70, 3.5}};
  SparseSystem sys = assemble(12, 9, w, seeds);
  for (int r = 0; r < sys.n; ++r)
    CHECK(sys.row_ptr[r + 1] - sys.row_ptr[r] <= 9);
  SolveResult res = solve(sys);
  CHECK(res.values[5] == 1.25f);
  CHECK(res.values[70] == 3.5f);
}
