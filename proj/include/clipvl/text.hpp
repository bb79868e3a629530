// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace clipvl {

/// Lowercases ASCII and splits on whitespace and punctuation. A word is a
/// maximal run of ASCII letters/digits or non-ASCII bytes (UTF-8 payload is
/// kept intact); everything else is a boundary and is dropped.
std::vector<std::string> split_words(std::string_view text);

/// Lowercased, punctuation-stripped, whitespace-collapsed form.
std::string canonicalize(std::string_view text);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace clipvl
