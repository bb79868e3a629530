// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

// Checkpoint directory layout:
//   manifest.json        {"format", "config", "fingerprint", "seed",
//                         "params": [{"name", "shape": [rows, cols], "file"}]}
//   params/<name>.f32    little-endian float32, row-major, no header

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "clipvl/model.hpp"

namespace clipvl {

struct ArrayShape {
  std::string name;
  Index rows = 0;
  Index cols = 0;

  friend bool operator==(const ArrayShape&, const ArrayShape&) = default;
};

struct CheckpointManifest {
  ModelConfig config;
  std::string fingerprint;
  std::uint64_t seed = 0;
  std::vector<ArrayShape> arrays;
};

inline constexpr std::string_view kCheckpointFormat = "clipvl-checkpoint/1";

void save_checkpoint(const ModelState<float>& state, const std::filesystem::path& dir);

CheckpointManifest read_checkpoint_manifest(const std::filesystem::path& dir);

/// Reads one array, checking the file size against the recorded shape.
Matrix<float> read_checkpoint_array(const std::filesystem::path& dir, const ArrayShape& shape);

/// Full load. The manifest fingerprint must equal expected.fingerprint() and
/// every parameter the config defines must be present with its shape.
ModelState<float> load_checkpoint(const std::filesystem::path& dir, const ModelConfig& expected);

/// Partial initialization: overwrites every parameter of `into` whose name
/// starts with one of `prefixes`; all other parameters are left untouched.
/// The fingerprint is not checked, but each selected array must exist with
/// the same shape. Returns the arrays that were loaded.
std::vector<ArrayShape> load_checkpoint_prefixes(const std::filesystem::path& dir, ParamStore<float>& into,
                                                 std::span<const std::string> prefixes);

}  // namespace clipvl
