#pragma once

#include <string>

#include "scaleflow/flow_field.hpp"

namespace scaleflow {

/// Middlebury .flo: magic float 202021.25, little-endian i32 width and
/// height, then row-major interleaved (u, v) little-endian f32. Values with
/// magnitude above 1e9 mark unknown flow.
inline constexpr float kFloMagic = 202021.25f;
inline constexpr float kUnknownFlow = 1e9f;

void save_flo(const FlowField& flow, const std::string& path);
FlowField load_flo(const std::string& path);

}  // namespace scaleflow
