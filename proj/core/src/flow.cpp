#include "scaleflow/flow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include "scaleflow/error.hpp"
#include "scaleflow/parallel.hpp"
#include "scaleflow/scalespace.hpp"

namespace scaleflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline double l1_distance(const float* a, const float* b) {
  double acc = 0.0;
  for (int i = 0; i < kDescriptorDim; ++i) acc += std::abs(static_cast<double>(a[i]) - b[i]);
  return acc;
}

inline double trunc_l1(double delta, double alpha, double d) {
  return std::min(alpha * std::abs(delta), d);
}

/// One pyramid level of the discrete optimizer. Labels are (du, dv) offsets
/// in [-radius, radius]^2 around per-pixel integer centers.
struct Level {
  const DenseDescriptorField* fa = nullptr;
  const DenseDescriptorField* fb = nullptr;
  FlowParams params;
  int w = 0, h = 0, r = 0, L = 0, L2 = 0;
  std::vector<int> cu, cv;     // label window centers (absolute flow)
  std::vector<int> label;      // current label per pixel
  std::vector<float> data;     // pixel-major data cost volume, L2 per pixel

  int du_of(int lbl) const { return lbl % L - r; }
  int dv_of(int lbl) const { return lbl / L - r; }
  int flow_u(int p) const { return cu[p] + du_of(label[p]); }
  int flow_v(int p) const { return cv[p] + dv_of(label[p]); }

  void build_data_volume() {
    data.assign(static_cast<std::size_t>(w) * h * L2, 0.0f);
    const double k = params.k;
    parallel_for(0, static_cast<std::size_t>(w) * h, [&](std::size_t p0, std::size_t p1) {
      for (std::size_t p = p0; p < p1; ++p) {
        const int x = static_cast<int>(p) % w;
        const int y = static_cast<int>(p) / w;
        const float* da = fa->at(x, y);
        float* out = data.data() + p * L2;
        for (int dv = -r; dv <= r; ++dv) {
          const int ty = y + cv[p] + dv;
          for (int du = -r; du <= r; ++du) {
            const int tx = x + cu[p] + du;
            double cost = k;
            if (tx >= 0 && ty >= 0 && tx < w && ty < h)
              cost = std::min(l1_distance(da, fb->at(tx, ty)), k);
            out[(dv + r) * L + (du + r)] = static_cast<float>(cost);
          }
        }
      }
    });
  }

  double unary(int p, int lbl, int perp_a, int perp_b) const {
    const int U = cu[p] + du_of(lbl);
    const int V = cv[p] + dv_of(lbl);
    double e = data[static_cast<std::size_t>(p) * L2 + lbl] +
               params.nu * (std::abs(U) + std::abs(V));
    for (int q : {perp_a, perp_b}) {
      if (q < 0) continue;
      e += trunc_l1(U - flow_u(q), params.alpha, params.d) +
           trunc_l1(V - flow_v(q), params.alpha, params.d);
    }
    return e;
  }

  double energy() const {
    double e = 0.0;
    for (int p = 0; p < w * h; ++p) {
      e += data[static_cast<std::size_t>(p) * L2 + label[p]] +
           params.nu * (std::abs(flow_u(p)) + std::abs(flow_v(p)));
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        int p = y * w + x;
        if (x + 1 < w) {
          int q = p + 1;
          e += trunc_l1(flow_u(p) - flow_u(q), params.alpha, params.d) +
               trunc_l1(flow_v(p) - flow_v(q), params.alpha, params.d);
        }
        if (y + 1 < h) {
          int q = p + w;
          e += trunc_l1(flow_u(p) - flow_u(q), params.alpha, params.d) +
               trunc_l1(flow_v(p) - flow_v(q), params.alpha, params.d);
        }
      }
    return e;
  }
};

/// Truncated-L1 min-convolution between two integer sample grids:
/// out[i] = min_j f[j] + min(alpha * |(src0 + j) - (dst0 + i)|, d),
/// arg[i] = the minimizing j. Linear time in the union range.
void trunc_l1_transform(const double* f, int ls, int src0, double* out, int* arg,
                        int lt, int dst0, double alpha, double d,
                        std::vector<double>& g, std::vector<int>& ga) {
  const int lo = std::min(src0, dst0);
  const int hi = std::max(src0 + ls - 1, dst0 + lt - 1);
  const int n = hi - lo + 1;
  g.assign(n, kInf);
  ga.assign(n, -1);
  double fmin = kInf;
  int argfmin = 0;
  for (int j = 0; j < ls; ++j) {
    g[src0 + j - lo] = f[j];
    ga[src0 + j - lo] = j;
    if (f[j] < fmin) {
      fmin = f[j];
      argfmin = j;
    }
  }
  for (int i = 1; i < n; ++i)
    if (g[i - 1] + alpha < g[i]) {
      g[i] = g[i - 1] + alpha;
      ga[i] = ga[i - 1];
    }
  for (int i = n - 2; i >= 0; --i)
    if (g[i + 1] + alpha < g[i]) {
      g[i] = g[i + 1] + alpha;
      ga[i] = ga[i + 1];
    }
  const double cap = fmin + d;
  for (int i = 0; i < lt; ++i) {
    int idx = dst0 + i - lo;
    if (cap < g[idx]) {
      out[i] = cap;
      arg[i] = argfmin;
    } else {
      out[i] = g[idx];
      arg[i] = ga[idx];
    }
  }
}

/// Exact minimization of the energy restricted to one chain of pixels (a row
/// or a column), everything else fixed: Viterbi DP with separable
/// truncated-L1 transitions in u then v.
void solve_chain(Level& lv, const std::vector<int>& seq, bool horizontal) {
  const int T = static_cast<int>(seq.size());
  const int L = lv.L, L2 = lv.L2, r = lv.r;
  std::vector<double> prev(L2), cur(L2);
  std::vector<int> bp(static_cast<std::size_t>(T) * L2, 0);
  std::vector<double> m1(static_cast<std::size_t>(L) * L);
  std::vector<int> argU(static_cast<std::size_t>(L) * L);
  std::vector<double> fbuf(L), obuf(L);
  std::vector<int> abuf(L);
  std::vector<double> g;
  std::vector<int> ga;

  auto perp = [&](int p, int& qa, int& qb) {
    const int x = p % lv.w, y = p / lv.w;
    if (horizontal) {
      qa = y > 0 ? p - lv.w : -1;
      qb = y + 1 < lv.h ? p + lv.w : -1;
    } else {
      qa = x > 0 ? p - 1 : -1;
      qb = x + 1 < lv.w ? p + 1 : -1;
    }
  };

  {
    int qa, qb;
    perp(seq[0], qa, qb);
    for (int l = 0; l < L2; ++l) prev[l] = lv.unary(seq[0], l, qa, qb);
  }

  for (int t = 1; t < T; ++t) {
    const int a = seq[t - 1], b = seq[t];
    // Stage 1: min-convolve along u for each fixed v-offset of pixel a.
    for (int iv1 = 0; iv1 < L; ++iv1) {
      for (int iu1 = 0; iu1 < L; ++iu1) fbuf[iu1] = prev[iv1 * L + iu1];
      trunc_l1_transform(fbuf.data(), L, lv.cu[a] - r, obuf.data(), abuf.data(), L,
                         lv.cu[b] - r, lv.params.alpha, lv.params.d, g, ga);
      for (int iu2 = 0; iu2 < L; ++iu2) {
        m1[static_cast<std::size_t>(iu2) * L + iv1] = obuf[iu2];
        argU[static_cast<std::size_t>(iu2) * L + iv1] = abuf[iu2];
      }
    }
    // Stage 2: min-convolve along v for each u-offset of pixel b.
    int qa, qb;
    perp(b, qa, qb);
    for (int iu2 = 0; iu2 < L; ++iu2) {
      const double* f2 = m1.data() + static_cast<std::size_t>(iu2) * L;
      trunc_l1_transform(f2, L, lv.cv[a] - r, obuf.data(), abuf.data(), L,
                         lv.cv[b] - r, lv.params.alpha, lv.params.d, g, ga);
      for (int iv2 = 0; iv2 < L; ++iv2) {
        const int lbl = iv2 * L + iu2;
        cur[lbl] = obuf[iv2];
        const int iv1 = abuf[iv2];
        bp[static_cast<std::size_t>(t) * L2 + lbl] =
            iv1 * L + argU[static_cast<std::size_t>(iu2) * L + iv1];
      }
    }
    for (int lbl = 0; lbl < L2; ++lbl) cur[lbl] += lv.unary(b, lbl, qa, qb);
    std::swap(prev, cur);
  }

  int best = 0;
  for (int lbl = 1; lbl < L2; ++lbl)
    if (prev[lbl] < prev[best]) best = lbl;
  for (int t = T - 1; t >= 0; --t) {
    lv.label[seq[t]] = best;
    if (t > 0) best = bp[static_cast<std::size_t>(t) * L2 + best];
  }
}

FlowField optimize_level(const DenseDescriptorField& fa, const DenseDescriptorField& fb,
                         const std::vector<int>& cu, const std::vector<int>& cv,
                         const FlowParams& params) {
  Level lv;
  lv.fa = &fa;
  lv.fb = &fb;
  lv.params = params;
  lv.w = fa.width;
  lv.h = fa.height;
  lv.r = std::max(1, params.radius);
  lv.L = 2 * lv.r + 1;
  lv.L2 = lv.L * lv.L;
  lv.cu = cu;
  lv.cv = cv;
  lv.label.assign(static_cast<std::size_t>(lv.w) * lv.h, lv.r * lv.L + lv.r);  // offset (0,0)
  lv.build_data_volume();

  auto run_chains = [&](bool horizontal, int parity) {
    const int count = horizontal ? lv.h : lv.w;
    std::vector<int> chains;
    for (int i = parity; i < count; i += 2) chains.push_back(i);
    parallel_for(0, chains.size(), [&](std::size_t c0, std::size_t c1) {
      for (std::size_t c = c0; c < c1; ++c) {
        const int i = chains[c];
        std::vector<int> seq;
        if (horizontal) {
          seq.reserve(lv.w);
          for (int x = 0; x < lv.w; ++x) seq.push_back(i * lv.w + x);
        } else {
          seq.reserve(lv.h);
          for (int y = 0; y < lv.h; ++y) seq.push_back(y * lv.w + i);
        }
        solve_chain(lv, seq, horizontal);
      }
    });
  };

  double prev_energy = lv.energy();
  for (int sweep = 0; sweep < params.iterations; ++sweep) {
    run_chains(true, 0);
    run_chains(true, 1);
    run_chains(false, 0);
    run_chains(false, 1);
    double e = lv.energy();
    if (e >= prev_energy - 1e-12) {
      prev_energy = std::min(prev_energy, e);
      break;
    }
    prev_energy = e;
  }

  FlowField flow = FlowField::zeros(lv.w, lv.h);
  for (int p = 0; p < lv.w * lv.h; ++p) {
    flow.u[p] = static_cast<float>(lv.flow_u(p));
    flow.v[p] = static_cast<float>(lv.flow_v(p));
  }
  flow.energy = prev_energy;
  return flow;
}

DenseDescriptorField pool2(const DenseDescriptorField& f) {
  DenseDescriptorField out;
  out.width = std::max(1, f.width / 2);
  out.height = std::max(1, f.height / 2);
  out.scale_source = f.scale_source;
  out.data.assign(static_cast<std::size_t>(out.width) * out.height * kDescriptorDim, 0.0f);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      float* dst = out.at(x, y);
      int n = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          int sx = 2 * x + dx, sy = 2 * y + dy;
          if (sx >= f.width || sy >= f.height) continue;
          const float* src = f.at(sx, sy);
          for (int i = 0; i < kDescriptorDim; ++i) dst[i] += src[i];
          ++n;
        }
      double norm2 = 0.0;
      for (int i = 0; i < kDescriptorDim; ++i) {
        dst[i] /= static_cast<float>(n);
        norm2 += static_cast<double>(dst[i]) * dst[i];
      }
      if (norm2 > 1e-24) {
        float inv = static_cast<float>(1.0 / std::sqrt(norm2));
        for (int i = 0; i < kDescriptorDim; ++i) dst[i] *= inv;
      }
    }
  return out;
}

int usable_levels(int width, int height, int requested) {
  int levels = 1;
  int d = std::min(width, height);
  while (levels < requested && d / 2 >= 8) {
    d /= 2;
    ++levels;
  }
  return levels;
}

}  // namespace

double data_cost(const DenseDescriptorField& fa, const DenseDescriptorField& fb,
                 int x, int y, int u, int v, double k) {
  const int tx = x + u, ty = y + v;
  if (tx < 0 || ty < 0 || tx >= fb.width || ty >= fb.height) return k;
  return std::min(l1_distance(fa.at(x, y), fb.at(tx, ty)), k);
}

double flow_energy(const DenseDescriptorField& fa, const DenseDescriptorField& fb,
                   const FlowField& flow, const FlowParams& params) {
  double e = 0.0;
  auto u_at = [&](int x, int y) { return static_cast<int>(flow.u[flow.index(x, y)]); };
  auto v_at = [&](int x, int y) { return static_cast<int>(flow.v[flow.index(x, y)]); };
  for (int y = 0; y < flow.height; ++y)
    for (int x = 0; x < flow.width; ++x) {
      int u = u_at(x, y), v = v_at(x, y);
      e += data_cost(fa, fb, x, y, u, v, params.k) +
           params.nu * (std::abs(u) + std::abs(v));
      if (x + 1 < flow.width)
        e += trunc_l1(u - u_at(x + 1, y), params.alpha, params.d) +
             trunc_l1(v - v_at(x + 1, y), params.alpha, params.d);
      if (y + 1 < flow.height)
        e += trunc_l1(u - u_at(x, y + 1), params.alpha, params.d) +
             trunc_l1(v - v_at(x, y + 1), params.alpha, params.d);
    }
  return e;
}

FlowField estimate_flow_pyramid(const std::vector<FieldPair>& levels,
                                const FlowParams& params) {
  if (levels.empty())
    throw Error(ErrorCode::InvalidArgument, "estimate_flow_pyramid: no levels");
  for (const FieldPair& fp : levels)
    if (fp.a.width != fp.b.width || fp.a.height != fp.b.height)
      throw Error(ErrorCode::InvalidArgument, "estimate_flow_pyramid: dims mismatch");

  const int nlev = static_cast<int>(levels.size());

  // One coarse-to-fine pass first, then finest-level continuation passes:
  // each pass re-centers the per-pixel search windows on the current
  // solution, so the reachable displacement grows by `radius` per pass even
  // where the pooled coarse levels carry no signal (large displacements
  // combined with strong scale differences truncate the coarse data term
  // everywhere). Passes continue only while the energy strictly decreases,
  // so the result is monotone and deterministic.
  FlowField flow;
  for (int li = nlev - 1; li >= 0; --li) {
    const FieldPair& fp = levels[li];
    const std::size_t n = static_cast<std::size_t>(fp.a.width) * fp.a.height;
    std::vector<int> cu(n, 0), cv(n, 0);
    if (li < nlev - 1) {
      for (int y = 0; y < fp.a.height; ++y)
        for (int x = 0; x < fp.a.width; ++x) {
          int sx = std::min(x / 2, flow.width - 1);
          int sy = std::min(y / 2, flow.height - 1);
          cu[static_cast<std::size_t>(y) * fp.a.width + x] =
              2 * static_cast<int>(flow.u[flow.index(sx, sy)]);
          cv[static_cast<std::size_t>(y) * fp.a.width + x] =
              2 * static_cast<int>(flow.v[flow.index(sx, sy)]);
        }
    }
    flow = optimize_level(fp.a, fp.b, cu, cv, params);
  }

  const int kMaxPasses = 16;
  FlowField best = flow;
  double best_energy = flow.energy;
  const FieldPair& fine = levels[0];
  const std::size_t n = static_cast<std::size_t>(fine.a.width) * fine.a.height;

  // Least-squares affine fit of the current flow over pixels whose data term
  // is clearly below truncation (i.e. actually supported by the descriptors).
  // Returns false when the support is too small or degenerate.
  auto affine_anchor = [&](const FlowField& f, std::vector<int>& au,
                           std::vector<int>& av) {
    double m[3][3] = {};
    double ru[3] = {}, rv[3] = {};
    long count = 0;
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) {
        std::size_t i = f.index(x, y);
        int u = static_cast<int>(f.u[i]), v = static_cast<int>(f.v[i]);
        if (data_cost(fine.a, fine.b, x, y, u, v, params.k) >= 0.75 * params.k)
          continue;
        ++count;
        const double b[3] = {static_cast<double>(x), static_cast<double>(y), 1.0};
        for (int r = 0; r < 3; ++r) {
          for (int c = 0; c < 3; ++c) m[r][c] += b[r] * b[c];
          ru[r] += u * b[r];
          rv[r] += v * b[r];
        }
      }
    if (count < 32) return false;
    // Gaussian elimination with partial pivoting on the 3x3 system.
    double a[3][5];
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) a[r][c] = m[r][c];
      a[r][3] = ru[r];
      a[r][4] = rv[r];
    }
    for (int col = 0; col < 3; ++col) {
      int piv = col;
      for (int r = col + 1; r < 3; ++r)
        if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
      if (std::abs(a[piv][col]) < 1e-9 * (std::abs(m[0][0]) + 1.0)) return false;
      for (int c = 0; c < 5; ++c) std::swap(a[col][c], a[piv][c]);
      for (int r = 0; r < 3; ++r) {
        if (r == col) continue;
        double fct = a[r][col] / a[col][col];
        for (int c = col; c < 5; ++c) a[r][c] -= fct * a[col][c];
      }
    }
    double cu_[3], cv_[3];
    for (int r = 0; r < 3; ++r) {
      cu_[r] = a[r][3] / a[r][r];
      cv_[r] = a[r][4] / a[r][r];
    }
    // Re-center on the affine prediction only where the prediction itself is
    // supported by the data; elsewhere (occlusions, padding, genuinely
    // unmatched content) keep the current solution's window so the small-
    // displacement prior is not charged for labels the data cannot justify.
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) {
        std::size_t i = f.index(x, y);
        int pu = static_cast<int>(std::lround(cu_[0] * x + cu_[1] * y + cu_[2]));
        int pv = static_cast<int>(std::lround(cv_[0] * x + cv_[1] * y + cv_[2]));
        if (data_cost(fine.a, fine.b, x, y, pu, pv, params.k) < 0.75 * params.k) {
          au[i] = pu;
          av[i] = pv;
        } else {
          au[i] = static_cast<int>(std::lround(f.u[i]));
          av[i] = static_cast<int>(std::lround(f.v[i]));
        }
      }
    return true;
  };

  bool tried_plain = false;
  for (int pass = 1; pass < kMaxPasses; ++pass) {
    std::vector<int> cu(n), cv(n);
    bool use_affine = !tried_plain && affine_anchor(best, cu, cv);
    if (!use_affine)
      for (std::size_t i = 0; i < n; ++i) {
        cu[i] = static_cast<int>(std::lround(best.u[i]));
        cv[i] = static_cast<int>(std::lround(best.v[i]));
      }
    flow = optimize_level(fine.a, fine.b, cu, cv, params);
    if (flow.energy < best_energy - 1e-9) {
      best_energy = flow.energy;
      best = flow;
      tried_plain = false;
    } else if (use_affine && !tried_plain) {
      tried_plain = true;  // affine stalled: try plain re-centering once
    } else {
      break;
    }
  }
  return best;
}

FlowField estimate_flow(const DenseDescriptorField& fa, const DenseDescriptorField& fb,
                        const FlowParams& params) {
  if (fa.width != fb.width || fa.height != fb.height)
    throw Error(ErrorCode::InvalidArgument, "estimate_flow: dims mismatch");
  const int nlev = usable_levels(fa.width, fa.height, std::max(1, params.levels));
  std::vector<FieldPair> levels;
  levels.reserve(nlev);
  levels.push_back({fa, fb});
  for (int l = 1; l < nlev; ++l)
    levels.push_back({pool2(levels.back().a), pool2(levels.back().b)});
  return estimate_flow_pyramid(levels, params);
}

PipelineResult pipeline(const Image& img_a, const Image& img_b, PipelineMethod method,
                        const PipelineOptions& opt, PipelineTimings* timings) {
  using Clock = std::chrono::steady_clock;
  auto seconds_since = [](Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
  };
  PipelineTimings local;
  if (!timings) timings = &local;

  Image gray_a = to_grayscale(img_a);
  Image gray_b = to_grayscale(img_b);

  // Pad with zeros (bottom-right) to common dimensions.
  const int w = std::max(gray_a.width, gray_b.width);
  const int h = std::max(gray_a.height, gray_b.height);
  auto pad = [&](const Image& img) {
    if (img.width == w && img.height == h) return img;
    Image out = Image::zeros(w, h, 1);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) out.at(x, y) = img.at(x, y);
    return out;
  };
  gray_a = pad(gray_a);
  gray_b = pad(gray_b);

  ScaleMap smap_a = ScaleMap::constant(w, h, static_cast<float>(kDefaultScale));
  ScaleMap smap_b = ScaleMap::constant(w, h, static_cast<float>(kDefaultScale));

  if (method != PipelineMethod::DSift) {
    auto t_det = Clock::now();
    std::vector<Keypoint> kps_a = detect_keypoints(gray_a, opt.det);
    std::vector<Keypoint> kps_b = detect_keypoints(gray_b, opt.det);
    timings->detect_sec = seconds_since(t_det);
    auto t_prop = Clock::now();
    auto per_image = [&](PropagationScheme scheme) {
      if (!kps_a.empty())
        smap_a = propagate(gray_a,
                           seeds_from_keypoints(kps_a, w, h, opt.prop.sigma_min,
                                                opt.prop.sigma_max),
                           scheme, opt.prop);
      if (!kps_b.empty())
        smap_b = propagate(gray_b,
                           seeds_from_keypoints(kps_b, w, h, opt.prop.sigma_min,
                                                opt.prop.sigma_max),
                           scheme, opt.prop);
    };
    if (method == PipelineMethod::Geometric) {
      per_image(PropagationScheme::Geometric);
    } else if (method == PipelineMethod::ImageAware) {
      per_image(PropagationScheme::ImageAware);
    } else {
      try {
        auto [ma, mb] =
            propagate_matched(gray_a, gray_b, kps_a, kps_b, opt.match_guidance, opt.prop);
        smap_a = std::move(ma);
        smap_b = std::move(mb);
      } catch (const Error& e) {
        if (!opt.match_fallback || e.code() != ErrorCode::NoMatches) throw;
        if (!kps_a.empty() && !kps_b.empty())
          per_image(opt.match_guidance);
        // else: constant maps already in place
      }
    }
    timings->propagation_sec = seconds_since(t_prop);
  }

  // Descriptors are extracted once at full resolution where the scale maps
  // are meaningful; coarser optimizer levels are built by descriptor pooling
  // (inside estimate_flow). Re-extracting at downsampled resolutions would
  // push the smaller image's divided scales below the sampling blur of its
  // grid and destroy the scale adaptation exactly where the coarse
  // alignment decisions are made.
  auto t_desc = Clock::now();
  DenseDescriptorField fa = extract_dense_mapped(gray_a, smap_a);
  DenseDescriptorField fb = extract_dense_mapped(gray_b, smap_b);
  timings->descriptor_sec = seconds_since(t_desc);

  PipelineResult res;
  auto t_flow = Clock::now();
  res.flow = estimate_flow(fa, fb, opt.flow);
  timings->flow_sec = seconds_since(t_flow);
  res.smap_a = std::move(smap_a);
  res.smap_b = std::move(smap_b);
  return res;
}

}  // namespace scaleflow
