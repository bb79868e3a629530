// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/error.hpp"

namespace clipvl {

std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::Io: return "Io";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::SizeMismatch: return "SizeMismatch";
    case Errc::NonFinite: return "NonFinite";
    case Errc::DuplicateVideoId: return "DuplicateVideoId";
    case Errc::SchemaError: return "SchemaError";
    case Errc::DanglingVideoRef: return "DanglingVideoRef";
    case Errc::SpanOutOfRange: return "SpanOutOfRange";
    case Errc::SplitOverlap: return "SplitOverlap";
    case Errc::IdOutOfRange: return "IdOutOfRange";
    case Errc::SequenceTooLong: return "SequenceTooLong";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::MissingParameter: return "MissingParameter";
    case Errc::NamespaceMismatch: return "NamespaceMismatch";
    case Errc::EmptySplit: return "EmptySplit";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::FingerprintMismatch: return "FingerprintMismatch";
    case Errc::GoldMissing: return "GoldMissing";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::EmptyReferenceSet: return "EmptyReferenceSet";
    case Errc::MissingTask: return "MissingTask";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace clipvl
