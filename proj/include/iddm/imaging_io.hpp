// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "iddm/image.hpp"

namespace iddm {

/// Loads an 8- or 16-bit grayscale/RGB PNG, scaling by the bit-depth maximum.
ImageTensor load_image(const std::filesystem::path& path);

/// Clamps to [0,1] and writes an 8-bit PNG (round half up).
void save_image(const ImageTensor& img, const std::filesystem::path& path);

struct LoadedDepth {
  DepthMap depth;
  /// Set when the raw map was constant; `depth` is then all zeros.
  bool constant_input = false;
};

/// Loads a 16-bit grayscale PNG or a single-channel PFM, min-max normalizes it
/// to [0,1] and multiplies by `depth_scale`.
LoadedDepth load_depth(const std::filesystem::path& path, float depth_scale = 1.0f);

/// Min-max normalization shared by load_depth; a constant map becomes zeros.
LoadedDepth normalize_depth(const Eigen::ArrayXd& raw, int height, int width, float depth_scale);

/// Writes depth as a 16-bit grayscale PNG after mapping [0, max_value] to [0, 65535].
void save_depth_png16(const DepthMap& depth, const std::filesystem::path& path, float max_value = 1.0f);

/// Little-endian single channel PFM ("Pf"), rows stored bottom to top.
void save_pfm(const Depth<float>& depth, const std::filesystem::path& path);

struct ManifestEntry {
  std::filesystem::path clear;
  std::filesystem::path depth;
};

/// JSON-lines, one {"clear": ..., "depth": ...} per line. Relative paths are
/// resolved against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);

/// Procedural clear image + depth pair: a smooth colour gradient overlaid by
/// 2-5 axis-aligned rectangles; depth is a ramp plus per-rectangle offsets,
/// min-max normalized to span [0,1]. Pure function of its arguments.
std::pair<ImageTensor, DepthMap> generate_scene(std::uint64_t seed, int height, int width);

}  // namespace iddm
