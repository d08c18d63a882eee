#include "scaleflow/flo_io.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <vector>

#include "scaleflow/error.hpp"

namespace scaleflow {

void save_flo(const FlowField& flow, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::MissingFile, "cannot open for write: " + tmp);
    float magic = kFloMagic;
    std::int32_t w = flow.width, h = flow.height;
    out.write(reinterpret_cast<const char*>(&magic), 4);
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    std::vector<float> row(static_cast<std::size_t>(flow.width) * 2);
    for (int y = 0; y < flow.height; ++y) {
      for (int x = 0; x < flow.width; ++x) {
        row[2 * x] = flow.u[flow.index(x, y)];
        row[2 * x + 1] = flow.v[flow.index(x, y)];
      }
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw Error(ErrorCode::CorruptStream, "short write: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error(ErrorCode::MissingFile, "cannot write " + path);
  }
}

FlowField load_flo(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "no such file: " + path);
  float magic = 0.0f;
  std::int32_t w = 0, h = 0;
  in.read(reinterpret_cast<char*>(&magic), 4);
  in.read(reinterpret_cast<char*>(&w), 4);
  in.read(reinterpret_cast<char*>(&h), 4);
  if (!in || magic != kFloMagic)
    throw Error(ErrorCode::UnsupportedFormat, "not a .flo file: " + path);
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16)
    throw Error(ErrorCode::CorruptStream, "implausible .flo dimensions: " + path);
  FlowField flow = FlowField::zeros(w, h);
  std::vector<float> row(static_cast<std::size_t>(w) * 2);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw Error(ErrorCode::CorruptStream, "truncated .flo data: " + path);
    for (int x = 0; x < w; ++x) {
      flow.u[flow.index(x, y)] = row[2 * x];
      flow.v[flow.index(x, y)] = row[2 * x + 1];
    }
  }
  return flow;
}

}  // namespace scaleflow
