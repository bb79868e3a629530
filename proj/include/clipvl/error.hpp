// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace clipvl {

enum class Errc {
  Io,
  InvalidArgument,
  SizeMismatch,
  NonFinite,
  DuplicateVideoId,
  SchemaError,
  DanglingVideoRef,
  SpanOutOfRange,
  SplitOverlap,
  IdOutOfRange,
  SequenceTooLong,
  ShapeMismatch,
  MissingParameter,
  NamespaceMismatch,
  EmptySplit,
  NonFiniteLoss,
  FingerprintMismatch,
  GoldMissing,
  LengthMismatch,
  EmptyReferenceSet,
  MissingTask,
};

std::string_view to_string(Errc code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI exit-code mapping) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace clipvl
