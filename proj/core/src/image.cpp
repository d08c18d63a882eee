#include "scaleflow/image.hpp"

#include <algorithm>
#include <cmath>

#include "scaleflow/error.hpp"
#include "scaleflow/scalespace.hpp"

namespace scaleflow {

Image Image::zeros(int w, int h, int c) {
  Image img;
  img.width = w;
  img.height = h;
  img.channels = c;
  img.data.assign(static_cast<std::size_t>(w) * h * c, 0.0f);
  return img;
}

Image to_grayscale(const Image& img) {
  if (img.channels == 1) return img;
  if (img.channels != 3)
    throw Error(ErrorCode::InvalidArgument, "to_grayscale: channels must be 1 or 3");
  Image out = Image::zeros(img.width, img.height, 1);
  const std::size_t n = img.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    out.data[i] = 0.299f * img.data[3 * i + 0] + 0.587f * img.data[3 * i + 1] +
                  0.114f * img.data[3 * i + 2];
  }
  return out;
}

float sample_bilinear(const Image& img, float x, float y, int c) {
  x = std::clamp(x, 0.0f, static_cast<float>(img.width - 1));
  y = std::clamp(y, 0.0f, static_cast<float>(img.height - 1));
  int x0 = static_cast<int>(std::floor(x));
  int y0 = static_cast<int>(std::floor(y));
  int x1 = std::min(x0 + 1, img.width - 1);
  int y1 = std::min(y0 + 1, img.height - 1);
  float fx = x - x0;
  float fy = y - y0;
  float v00 = img.at(x0, y0, c), v10 = img.at(x1, y0, c);
  float v01 = img.at(x0, y1, c), v11 = img.at(x1, y1, c);
  return (1 - fy) * ((1 - fx) * v00 + fx * v10) + fy * ((1 - fx) * v01 + fx * v11);
}

Image resize(const Image& img, double factor) {
  if (factor <= 0.0)
    throw Error(ErrorCode::InvalidArgument, "resize: factor must be positive");
  int ow = static_cast<int>(std::lround(img.width * factor));
  int oh = static_cast<int>(std::lround(img.height * factor));
  if (ow < 1 || oh < 1)
    throw Error(ErrorCode::InvalidArgument, "resize: factor yields zero-size image");
  const Image* src = &img;
  Image blurred;
  if (factor < 1.0) {
    // Anti-alias prefilter for minification: the source carries ~0.5 px of
    // inherent blur, the output should carry the same at its own sampling
    // rate, i.e. 0.5/factor in source pixels.
    double sigma = 0.5 * std::sqrt(1.0 / (factor * factor) - 1.0);
    if (sigma > 0.1) {
      blurred = gaussian_blur(img, sigma);
      src = &blurred;
    }
  }
  Image out = Image::zeros(ow, oh, img.channels);
  const double inv = 1.0 / factor;
  for (int y = 0; y < oh; ++y) {
    float sy = static_cast<float>((y + 0.5) * inv - 0.5);
    for (int x = 0; x < ow; ++x) {
      float sx = static_cast<float>((x + 0.5) * inv - 0.5);
      for (int c = 0; c < img.channels; ++c)
        out.at(x, y, c) = sample_bilinear(*src, sx, sy, c);
    }
  }
  return out;
}

WarpResult warp_backward(const Image& target, const FlowField& flow) {
  WarpResult res;
  res.image = Image::zeros(flow.width, flow.height, target.channels);
  res.valid.assign(static_cast<std::size_t>(flow.width) * flow.height, 0);
  for (int y = 0; y < flow.height; ++y) {
    for (int x = 0; x < flow.width; ++x) {
      std::size_t i = flow.index(x, y);
      float tx = x + flow.u[i];
      float ty = y + flow.v[i];
      if (tx < 0.0f || ty < 0.0f || tx > target.width - 1 || ty > target.height - 1)
        continue;
      res.valid[i] = 1;
      for (int c = 0; c < target.channels; ++c)
        res.image.at(x, y, c) = sample_bilinear(target, tx, ty, c);
    }
  }
  return res;
}

}  // namespace scaleflow
