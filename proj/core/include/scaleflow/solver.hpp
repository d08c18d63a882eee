#pragma once

#include <array>
#include <utility>
#include <vector>

namespace scaleflow {

/// Fixed 8-neighbor order used by all stencils: (-1,-1) (0,-1) (1,-1)
/// (-1,0) (1,0) (-1,1) (0,1) (1,1). Out-of-image neighbors carry weight 0.
inline constexpr std::array<std::pair<int, int>, 8> kNeighborOffsets = {{
    {-1, -1}, {0, -1}, {1, -1}, {-1, 0}, {1, 0}, {-1, 1}, {0, 1}, {1, 1}}};

/// Per-pixel affinity stencils over the 8-neighborhood; each stencil's
/// weights sum to 1.
struct StencilField {
  int width = 0;
  int height = 0;
  std::vector<std::array<float, 8>> stencils;
};

/// Sparse equations for the seeded quadratic propagation cost: one row per
/// free pixel, S(p) - sum_q w_pq S(q) with seeded neighbors moved to the
/// right-hand side (hard constraints). Rows have at most 9 nonzeros.
struct SparseSystem {
  int width = 0;
  int height = 0;
  int n = 0;  // free unknowns
  std::vector<int> row_ptr;
  std::vector<int> col_idx;  // free-variable indices
  std::vector<double> vals;
  std::vector<double> rhs;
  std::vector<int> free_index;                    // pixel -> free idx, -1 if seeded
  std::vector<std::pair<int, double>> constraints;  // (pixel, value)
};

struct SolveResult {
  std::vector<double> values;  // full width*height field, seeds at exact values
  int iterations = 0;
  double relative_residual = 0.0;
  bool used_normal_equations = false;  // fell back to A^T A after CG trouble
};

SparseSystem assemble(int width, int height, const StencilField& weights,
                      const std::vector<std::pair<int, double>>& seeds);

/// Jacobi-preconditioned conjugate gradient (the diagonal is 1 after
/// assembly, so this is plain CG); falls back to CG on the normal equations
/// if non-positive curvature or stagnation is detected. Terminates on true
/// relative residual < tol. max_iter = 0 selects max(1000, 10 * sqrt(n)).
/// init, when given, is a full width*height field used as the starting
/// iterate (e.g. an upsampled coarse-grid solution); seeds within it are
/// ignored.
SolveResult solve(const SparseSystem& sys, double tol = 1e-6, int max_iter = 0,
                  const std::vector<double>* init = nullptr);

/// Fixed-budget BiCGSTAB refinement from a full-field initial guess (e.g. an
/// upsampled coarse-grid solution). Returns the iterate with the smallest
/// true residual seen, so the result is never worse than the guess; stops
/// early when the relative residual reaches tol.
SolveResult polish(const SparseSystem& sys, const std::vector<double>& init,
                   double tol, int max_iter);

/// Propagation cost of Eq-style quadratic: sum over free pixels of
/// (S(p) - sum_q w_pq S(q))^2 given a full field.
double propagation_cost(const SparseSystem& sys, const StencilField& weights,
                        const std::vector<double>& field);

}  // namespace scaleflow
