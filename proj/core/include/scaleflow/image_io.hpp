#pragma once

#include <string>

#include "scaleflow/image.hpp"

namespace scaleflow {

/// Decodes a PNG or binary PPM/PGM file; 8-bit samples are mapped to [0,1].
/// Errors: MissingFile, UnsupportedFormat, CorruptStream.
Image load_image(const std::string& path);

/// Writes an 8-bit grayscale or RGB PNG. The file is written to a temporary
/// name in the same directory and renamed into place.
void save_png(const Image& img, const std::string& path);

/// Single-channel portable float map ("Pf"), little-endian, bottom-to-top rows.
void save_pfm(const Image& img, const std::string& path);
Image load_pfm(const std::string& path);

}  // namespace scaleflow
