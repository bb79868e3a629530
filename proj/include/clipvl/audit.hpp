// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

// Cross-task split-leakage detection over text payloads and video ids.

#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "clipvl/corpus.hpp"

namespace clipvl {

struct ExampleRef {
  TaskId task = TaskId::TVR;
  SplitId split = SplitId::Train;
  std::string example_id;
  int payload_index = 0;  // position within text_payloads()

  auto operator<=>(const ExampleRef&) const = default;
};

struct Fingerprint {
  std::uint64_t hash = 0;   // fnv1a(canonicalize(payload))
  std::string canonical;
  std::string video_id;
  ExampleRef source;
};

/// One fingerprint per text payload per example, in split then record order.
std::vector<Fingerprint> fingerprint_bundle(const DatasetBundle& bundle);

enum class MatchKind { ExactText, SameVideoTextOverlap };

std::string_view to_string(MatchKind kind);

struct LeakEntry {
  ExampleRef eval_side;
  ExampleRef train_side;
  MatchKind kind = MatchKind::ExactText;
  std::string eval_video;
  std::string train_video;

  auto operator<=>(const LeakEntry&) const = default;
};

struct AuditOptions {
  double jaccard_threshold = 0.8;
  std::set<SplitId> eval_splits{SplitId::Val, SplitId::Test};
  std::set<SplitId> train_splits{SplitId::Train};
};

struct LeakReport {
  std::vector<LeakEntry> entries;  // sorted

  /// Entry counts keyed by "<eval task>/<split> -> <train task>/<split> <kind>".
  std::map<std::string, int> summary() const;
  std::string summary_text() const;
  /// One JSON object per line.
  std::string to_jsonl() const;
};

/// Token-set Jaccard similarity of two canonical payloads.
double token_jaccard(const std::string& a, const std::string& b);

/// Every pair (eval fingerprint, train fingerprint) from different
/// (task, split) sources whose canonical payloads are equal (exact_text), or,
/// failing that, whose videos are equal and whose token Jaccard is at least
/// the threshold (same_video_text_overlap).
LeakReport audit_overlap(std::span<const DatasetBundle> eval_bundles, std::span<const DatasetBundle> train_bundles,
                         const AuditOptions& options = {});

/// Same pairs with the eval and train sides swapped, re-sorted.
LeakReport mirrored(const LeakReport& report);

}  // namespace clipvl
