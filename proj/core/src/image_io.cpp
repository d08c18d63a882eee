#include "scaleflow/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include "scaleflow/error.hpp"

namespace scaleflow {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

Image load_png_file(std::FILE* fp, const std::string& path) {
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::CorruptStream, "png init failed: " + path);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::CorruptStream, "png init failed: " + path);
  }
  std::vector<png_bytep> row_ptrs;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::CorruptStream, "corrupt PNG stream: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);

  png_uint_32 w = png_get_image_width(png, info);
  png_uint_32 h = png_get_image_height(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  int color_type = png_get_color_type(png, info);

  if (bit_depth == 16) png_set_strip_16(png);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_read_update_info(png, info);

  color_type = png_get_color_type(png, info);
  const int channels = (color_type == PNG_COLOR_TYPE_GRAY) ? 1 : 3;
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  pixels.resize(rowbytes * h);
  row_ptrs.resize(h);
  for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = pixels.data() + y * rowbytes;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  Image img = Image::zeros(static_cast<int>(w), static_cast<int>(h), channels);
  for (png_uint_32 y = 0; y < h; ++y) {
    const png_byte* row = pixels.data() + y * rowbytes;
    for (png_uint_32 x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c)
        img.at(static_cast<int>(x), static_cast<int>(y), c) =
            row[x * channels + c] / 255.0f;
  }
  return img;
}

// Binary PGM (P5) / PPM (P6), maxval <= 255.
Image load_pnm(std::ifstream& in, const std::string& path) {
  auto next_token = [&in, &path]() {
    std::string tok;
    for (;;) {
      int c = in.get();
      if (c == EOF) throw Error(ErrorCode::CorruptStream, "truncated PNM: " + path);
      if (c == '#') {
        while (c != '\n' && c != EOF) c = in.get();
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) return tok;
        continue;
      }
      tok.push_back(static_cast<char>(c));
    }
  };
  std::string magic = next_token();
  int channels = magic == "P5" ? 1 : 3;
  int w, h, maxval;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw Error(ErrorCode::CorruptStream, "bad PNM header: " + path);
  }
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
    throw Error(ErrorCode::UnsupportedFormat, "unsupported PNM header: " + path);
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * channels);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw Error(ErrorCode::CorruptStream, "truncated PNM data: " + path);
  Image img = Image::zeros(w, h, channels);
  const float scale = 1.0f / static_cast<float>(maxval);
  for (std::size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] * scale;
  return img;
}

void atomic_rename(const std::string& tmp, const std::string& path) {
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw Error(ErrorCode::MissingFile, "cannot write " + path);
  }
}

}  // namespace

Image load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "no such file: " + path);
  unsigned char magic[8] = {0};
  in.read(reinterpret_cast<char*>(magic), 8);
  if (in.gcount() < 2)
    throw Error(ErrorCode::CorruptStream, "file too short: " + path);
  static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (in.gcount() == 8 && std::memcmp(magic, png_sig, 8) == 0) {
    in.close();
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw Error(ErrorCode::MissingFile, "no such file: " + path);
    return load_png_file(fp.get(), path);
  }
  if (magic[0] == 'P' && (magic[1] == '5' || magic[1] == '6')) {
    in.clear();
    in.seekg(0);
    return load_pnm(in, path);
  }
  throw Error(ErrorCode::UnsupportedFormat,
              "unsupported image format (expect PNG or binary PPM/PGM): " + path);
}

void save_png(const Image& img, const std::string& path) {
  if (img.channels != 1 && img.channels != 3)
    throw Error(ErrorCode::InvalidArgument, "save_png: channels must be 1 or 3");
  const std::string tmp = path + ".tmp";
  {
    FilePtr fp(std::fopen(tmp.c_str(), "wb"));
    if (!fp) throw Error(ErrorCode::MissingFile, "cannot open for write: " + tmp);
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info || setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw Error(ErrorCode::CorruptStream, "png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, img.width, img.height, 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<std::size_t>(img.width) * img.channels);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x)
        for (int c = 0; c < img.channels; ++c) {
          float v = std::clamp(img.at(x, y, c), 0.0f, 1.0f);
          row[static_cast<std::size_t>(x) * img.channels + c] =
              static_cast<png_byte>(std::lround(v * 255.0f));
        }
      png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  atomic_rename(tmp, path);
}

void save_pfm(const Image& img, const std::string& path) {
  if (img.channels != 1)
    throw Error(ErrorCode::InvalidArgument, "save_pfm: single channel only");
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::MissingFile, "cannot open for write: " + tmp);
    out << "Pf\n" << img.width << " " << img.height << "\n-1.0\n";
    // PFM stores rows bottom-to-top.
    for (int y = img.height - 1; y >= 0; --y)
      out.write(reinterpret_cast<const char*>(
                    &img.data[static_cast<std::size_t>(y) * img.width]),
                static_cast<std::streamsize>(sizeof(float)) * img.width);
    if (!out) throw Error(ErrorCode::CorruptStream, "short write: " + tmp);
  }
  atomic_rename(tmp, path);
}

Image load_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingFile, "no such file: " + path);
  std::string magic;
  int w, h;
  double scale;
  in >> magic >> w >> h >> scale;
  if (magic != "Pf" || w <= 0 || h <= 0)
    throw Error(ErrorCode::UnsupportedFormat, "not a grayscale PFM: " + path);
  in.get();  // single whitespace after header
  Image img = Image::zeros(w, h, 1);
  for (int y = h - 1; y >= 0; --y)
    in.read(reinterpret_cast<char*>(&img.data[static_cast<std::size_t>(y) * w]),
            static_cast<std::streamsize>(sizeof(float)) * w);
  if (!in) throw Error(ErrorCode::CorruptStream, "truncated PFM: " + path);
  return img;
}

}  // namespace scaleflow
