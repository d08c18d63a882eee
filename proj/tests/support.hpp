#pragma once

// Synthetic inputs shared by the test suites.

#include <string>

#include "scaleflow/image.hpp"

namespace testsup {

using scaleflow::Image;

/// Band-limited texture: sum of a few random sinusoid products, mapped into
/// roughly [0.1, 0.9]. Smooth enough for resampling checks, busy enough for
/// descriptors to discriminate positions.
Image sinusoid_texture(int w, int h, unsigned seed, int waves = 6);

/// Mid-gray field with scattered Gaussian blobs of varied size and sign.
/// Gives the detector well-isolated multi-scale extrema.
Image blob_texture(int w, int h, unsigned seed, int blobs = 24);

/// blob_texture overlaid with a faint sinusoid texture; detector-friendly and
/// still locally discriminative for dense matching.
Image rich_texture(int w, int h, unsigned seed);

/// Content translated by (dx, dy): out(x, y) = in(x - dx, y - dy), bilinear
/// with edge clamping.
Image shift_image(const Image& img, double dx, double dy);

/// Fresh unique directory under the system temp dir; caller owns cleanup
/// (or leaves it for the OS).
std::string temp_dir(const std::string& tag);

}  // namespace testsup
