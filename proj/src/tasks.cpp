// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/tasks.hpp"

#include <algorithm>
#include <cctype>

namespace clipvl {

namespace {

struct TaskInfo {
  TaskId id;
  TaskKind kind;
  std::string_view display;
  std::string_view slug;
};

constexpr std::array<TaskInfo, 11> kTaskInfo = {{
    {TaskId::TVR, TaskKind::Retrieval, "TVR", "tvr"},
    {TaskId::How2R, TaskKind::Retrieval, "How2R", "how2r"},
    {TaskId::YC2R, TaskKind::Retrieval, "YC2R", "yc2r"},
    {TaskId::VatexEnR, TaskKind::Retrieval, "VATEX-EN-R", "vatex_en_r"},
    {TaskId::TVQA, TaskKind::QA, "TVQA", "tvqa"},
    {TaskId::How2QA, TaskKind::QA, "How2QA", "how2qa"},
    {TaskId::Violin, TaskKind::QA, "VIOLIN", "violin"},
    {TaskId::VLEP, TaskKind::QA, "VLEP", "vlep"},
    {TaskId::TVC, TaskKind::Captioning, "TVC", "tvc"},
    {TaskId::YC2C, TaskKind::Captioning, "YC2C", "yc2c"},
    {TaskId::VatexEnC, TaskKind::Captioning, "VATEX-EN-C", "vatex_en_c"},
}};

const TaskInfo& info(TaskId task) { return kTaskInfo[static_cast<std::size_t>(task)]; }

std::string fold(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (c == '-') c = '_';
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

}  // namespace

TaskKind task_kind(TaskId task) { return info(task).kind; }

MetricKind metric_for(TaskKind kind) {
  switch (kind) {
    case TaskKind::Retrieval: return MetricKind::AveR;
    case TaskKind::QA: return MetricKind::Accuracy;
    case TaskKind::Captioning: return MetricKind::CIDEr;
  }
  return MetricKind::AveR;
}

std::string_view display_name(TaskId task) { return info(task).display; }
std::string_view slug(TaskId task) { return info(task).slug; }

std::optional<TaskId> parse_task(std::string_view text) {
  const std::string folded = fold(text);
  for (const auto& t : kTaskInfo) {
    if (folded == t.slug || folded == fold(t.display)) return t.id;
  }
  return std::nullopt;
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Retrieval: return "retrieval";
    case TaskKind::QA: return "qa";
    case TaskKind::Captioning: return "captioning";
  }
  return "?";
}

std::string_view to_string(SplitId split) {
  switch (split) {
    case SplitId::Train: return "train";
    case SplitId::Val: return "val";
    case SplitId::Test: return "test";
  }
  return "?";
}

std::optional<SplitId> parse_split(std::string_view text) {
  for (SplitId s : kAllSplits) {
    if (fold(text) == to_string(s)) return s;
  }
  return std::nullopt;
}

std::string_view to_string(MetricKind metric) {
  switch (metric) {
    case MetricKind::AveR: return "AveR";
    case MetricKind::Accuracy: return "Acc.";
    case MetricKind::CIDEr: return "C";
  }
  return "?";
}

std::optional<MetricKind> parse_metric(std::string_view text) {
  const std::string f = fold(text);
  if (f == "aver") return MetricKind::AveR;
  if (f == "acc." || f == "acc" || f == "accuracy") return MetricKind::Accuracy;
  if (f == "c" || f == "cider") return MetricKind::CIDEr;
  return std::nullopt;
}

}  // namespace clipvl
