// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace clipvl {

/// The eleven benchmark tasks, in leaderboard column order.
enum class TaskId {
  TVR,
  How2R,
  YC2R,
  VatexEnR,
  TVQA,
  How2QA,
  Violin,
  VLEP,
  TVC,
  YC2C,
  VatexEnC,
};

enum class TaskKind { Retrieval, QA, Captioning };

enum class SplitId { Train, Val, Test };

enum class MetricKind { AveR, Accuracy, CIDEr };

inline constexpr std::array<TaskId, 11> kAllTasks = {
    TaskId::TVR,    TaskId::How2R,  TaskId::YC2R, TaskId::VatexEnR,
    TaskId::TVQA,   TaskId::How2QA, TaskId::Violin, TaskId::VLEP,
    TaskId::TVC,    TaskId::YC2C,   TaskId::VatexEnC};

inline constexpr std::array<TaskId, 4> kQaTasks = {TaskId::TVQA, TaskId::How2QA,
                                                   TaskId::Violin, TaskId::VLEP};

inline constexpr std::array<SplitId, 3> kAllSplits = {SplitId::Train, SplitId::Val,
                                                      SplitId::Test};

TaskKind task_kind(TaskId task);
MetricKind metric_for(TaskKind kind);
inline MetricKind metric_for(TaskId task) { return metric_for(task_kind(task)); }

/// Display name as in the leaderboard header, e.g. "VATEX-EN-R".
std::string_view display_name(TaskId task);
/// Lowercase slug used in file names and on the command line, e.g. "vatex_en_r".
std::string_view slug(TaskId task);
/// Accepts either the display name or the slug, case-insensitively.
std::optional<TaskId> parse_task(std::string_view text);

std::string_view to_string(TaskKind kind);
std::string_view to_string(SplitId split);
std::optional<SplitId> parse_split(std::string_view text);
std::string_view to_string(MetricKind metric);
std::optional<MetricKind> parse_metric(std::string_view text);

}  // namespace clipvl
