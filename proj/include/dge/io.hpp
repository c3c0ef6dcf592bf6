// Copyright Contributors to the dge project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <json.hpp>
#include <vector>

#include "dge/field.hpp"
#include "dge/geometry.hpp"
#include "dge/image.hpp"

namespace dge::io {

namespace fs = std::filesystem;
using nlohmann::json;

/// 8-bit PNG; values are clamped to [0,1] and scaled by 255. One or three
/// channels.
void write_png(const fs::path& path, const Image& image);
/// Reads gray or RGB(A) PNGs; alpha is dropped, values scaled to [0,1].
Image read_png(const fs::path& path);

/// Lossless float fixture format: the 7 ASCII bytes "DGEIMG1", then width,
/// height and channels as little-endian int32, then width*height*channels
/// little-endian float32 values in row-major interleaved order.
void write_dgeimg(const fs::path& path, const Image& image);
Image read_dgeimg(const fs::path& path);

/// Binary little-endian PLY, one vertex per Gaussian with float properties
/// x y z opacity scale_0..2 rot_0..3 (w x y z) f_dc_0..2 f_rest_*. Opacity
/// and scales are stored as-is (not log/logit encoded). f_rest is laid out
/// channel-major. A sidecar `<path>.json` records {"sh_degree": L}.
void write_ply(const fs::path& path, const GaussianMixture& mix);
/// Reads the format above. Unknown scalar properties are skipped; the SH
/// degree comes from the sidecar when present, else from the f_rest count.
/// Quaternions are renormalized after the float32 round trip.
GaussianMixture read_ply(const fs::path& path);

json camera_to_json(const Camera& camera);
Camera camera_from_json(const json& j);
/// Camera sets are a JSON array of {fx, fy, cx, cy, width, height,
/// rotation: 9 row-major numbers, translation: 3 numbers}. Reading also
/// accepts an object with a "cameras" array.
json cameras_to_json(const std::vector<Camera>& cameras);
std::vector<Camera> cameras_from_json(const json& j);
void write_cameras(const fs::path& path, const std::vector<Camera>& cameras);
std::vector<Camera> read_cameras(const fs::path& path);

json read_json(const fs::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const fs::path& path, const json& j);

}  // namespace dge::io
