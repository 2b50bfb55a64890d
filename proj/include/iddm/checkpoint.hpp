// Copyright (C) 2026 The IDDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Checkpoint container:
//
//   "IDDM1" | uint64 LE header length | JSON header | float32 LE payload
//
// The header carries the architecture descriptor, a tensor table
// (name -> offset, shape, dtype) with row-major payloads, the Adam step count
// and a free-form "metadata" object.

#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "iddm/nets.hpp"

namespace iddm {

inline constexpr char kCheckpointMagic[] = "IDDM1";

struct Checkpoint {
  ModelParams<float> params;
  nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path,
                     const nlohmann::json& metadata = nlohmann::json::object());

/// Throws kArchitectureMismatch when `expected` is given and differs.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<Architecture>& expected = std::nullopt);

/// FNV-1a over parameter names and value bits.
std::uint64_t fingerprint(const ModelParams<float>& params);

}  // namespace iddm
