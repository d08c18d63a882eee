#pragma once

#include <cstddef>
#include <vector>

namespace scaleflow {

/// Per-pixel displacement field w(p) = (u(p), v(p)), u along columns and v
/// along rows. The discrete optimizer produces integer-valued displacements;
/// ground-truth fields read from .flo files may be fractional.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> u;
  std::vector<float> v;
  double energy = 0.0;

  static FlowField zeros(int w, int h) {
    FlowField f;
    f.width = w;
    f.height = h;
    f.u.assign(static_cast<std::size_t>(w) * h, 0.0f);
    f.v.assign(static_cast<std::size_t>(w) * h, 0.0f);
    return f;
  }

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width + x;
  }
};

}  // namespace scaleflow
