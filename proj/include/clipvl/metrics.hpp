// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

// Task metrics, the Meta-Ave aggregate, report files and leaderboard
// rendering. Everything here is pure.

#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clipvl/tasks.hpp"

namespace clipvl {

/// 1 iff `gold` is among the first k entries of `ranked`. Throws
/// GoldMissing when gold is absent from `ranked` altogether and
/// InvalidArgument for k < 1 or duplicate ids.
int recall_at_k(std::span<const std::string> ranked, const std::string& gold, int k);

struct RankedQuery {
  std::vector<std::string> ranked;
  std::string gold;
};

inline constexpr int kDefaultRecallKs[] = {1, 5, 10};

/// 100 * mean over queries of mean_k R@k.
double ave_r(std::span<const RankedQuery> results, std::span<const int> ks = kDefaultRecallKs);

/// 100 * matches / n. Throws LengthMismatch, InvalidArgument when empty.
double accuracy(std::span<const int> predictions, std::span<const int> golds);

/// Per-n n-gram counts of one sentence (n = 1..4).
struct NgramStats {
  std::vector<std::map<std::vector<std::string>, int>> counts;  // index n-1

  static NgramStats of(const std::string& text, int max_n = 4);
};

struct CiderOptions {
  int max_n = 4;
  double sigma = 6.0;
};

struct CiderResult {
  double score = 0.0;                 // mean over ids
  std::map<std::string, double> per_id;
};

/// CIDEr-D over a corpus. Document frequencies come from the reference sets.
/// Throws EmptyReferenceSet when a candidate id has no references and
/// InvalidArgument on an empty corpus.
CiderResult cider_d(const std::map<std::string, std::string>& candidates,
                    const std::map<std::string, std::vector<std::string>>& references, CiderOptions options = {});

/// Half-up rounding to two decimals.
double round2(double value);

struct TaskScore {
  MetricKind metric = MetricKind::AveR;
  double value = 0.0;

  friend bool operator==(const TaskScore&, const TaskScore&) = default;
};

struct ScoreReport {
  std::map<TaskId, TaskScore> scores;
  std::optional<double> meta_ave;

  bool complete() const { return scores.size() == kAllTasks.size(); }
  /// Throws InvalidArgument for non-finite or out-of-range values.
  void validate() const;

  nlohmann::json to_json() const;
  static ScoreReport from_json(const nlohmann::json& doc);
};

/// Unrounded mean of all 11 task values. Throws MissingTask naming the
/// absent tasks.
double meta_ave_exact(const ScoreReport& report);
/// round2(meta_ave_exact(report)).
double meta_ave(const ScoreReport& report);

/// Reads every *.json report in `dir`, merging task scores. Later files
/// (in name order) override earlier ones.
ScoreReport merge_reports(const std::filesystem::path& dir);

struct NamedReport {
  std::string name;
  ScoreReport report;
};

/// Reads every *.json report in `dir` as one row named by the file stem.
std::vector<NamedReport> load_reports(const std::filesystem::path& dir);

/// Pipe-separated table: rows are methods, columns the 11 tasks in
/// leaderboard order plus Meta-Ave. Column maxima are wrapped in ** **,
/// missing cells show "-".
std::string render_table(std::span<const NamedReport> reports);
nlohmann::json table_json(std::span<const NamedReport> reports);

}  // namespace clipvl
