// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

// Dataset-facing types and the on-disk formats for features, subtitles and
// per-split task records.
//
// Bundle directory layout:
//   features.<namespace>.json   feature manifest (or features.json)
//   <raw files>                 little-endian float32, row-major, no header
//   subtitles.jsonl             one SubtitleSegment per line (optional)
//   <task>.<split>.jsonl        one TaskExample per line

#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "clipvl/tasks.hpp"

namespace clipvl {

enum class NamespaceName { ClipVitSlowfast, ResnetSlowfast };

std::string_view to_string(NamespaceName name);
std::optional<NamespaceName> parse_namespace(std::string_view text);

struct FeatureNamespace {
  NamespaceName name = NamespaceName::ClipVitSlowfast;
  int dim = 32;

  friend bool operator==(const FeatureNamespace&, const FeatureNamespace&) = default;
};

/// Frame-level features are stored in single precision, as on disk.
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct VideoFeatures {
  std::string video_id;
  FeatureNamespace ns;
  FeatureMatrix frames;  // F x D

  int num_frames() const { return static_cast<int>(frames.rows()); }
};

struct SubtitleSegment {
  std::string video_id;
  int start_frame = 0;
  int end_frame = 0;
  std::string text;

  friend bool operator==(const SubtitleSegment&, const SubtitleSegment&) = default;
};

struct FrameSpan {
  int start_frame = 0;
  int end_frame = 0;

  friend bool operator==(const FrameSpan&, const FrameSpan&) = default;
};

struct RetrievalQuery {
  std::string query_id;
  std::string query_text;
  std::string positive_video_id;
  std::optional<FrameSpan> moment;

  friend bool operator==(const RetrievalQuery&, const RetrievalQuery&) = default;
};

struct QAItem {
  std::string example_id;
  std::string video_id;
  std::string question;
  std::vector<std::string> candidates;
  int gold_index = 0;

  friend bool operator==(const QAItem&, const QAItem&) = default;
};

struct CaptionItem {
  std::string video_id;
  std::vector<std::string> references;

  friend bool operator==(const CaptionItem&, const CaptionItem&) = default;
};

using TaskExample = std::variant<RetrievalQuery, QAItem, CaptionItem>;

TaskKind kind_of(const TaskExample& example);
/// Record id: query_id, example_id, or video_id for captioning items.
const std::string& example_id(const TaskExample& example);
const std::string& video_of(const TaskExample& example);
/// Text payloads in a fixed order: the query; the question and its
/// candidates joined into one payload; each caption reference.
std::vector<std::string> text_payloads(const TaskExample& example);
/// (task, canonical text payload, video) -- equal identities in two splits
/// constitute a split overlap.
std::string example_identity(TaskId task, const TaskExample& example);

nlohmann::json to_json(const TaskExample& example);
/// Throws Error(SchemaError) on malformed records.
TaskExample example_from_json(const nlohmann::json& record, TaskKind kind);

nlohmann::json to_json(const SubtitleSegment& segment);
SubtitleSegment subtitle_from_json(const nlohmann::json& record);

struct DatasetBundle {
  TaskId task = TaskId::TVR;
  std::map<SplitId, std::vector<TaskExample>> splits;
  std::map<std::string, VideoFeatures> videos;
  std::map<std::string, std::vector<SubtitleSegment>> subtitles;

  const std::vector<TaskExample>& split(SplitId id) const;
  const std::vector<SubtitleSegment>& subtitles_for(const std::string& video_id) const;
};

struct Violation {
  std::string record;  // "<split>/<record id>" or "video/<id>"
  std::string rule;    // an Errc name, e.g. "SplitOverlap"
  std::string detail;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Reads a manifest and all referenced raw files. Raw paths are resolved
/// relative to the manifest's directory.
std::map<std::string, VideoFeatures> load_features(const std::filesystem::path& manifest_path);

/// Writes raw files under `<manifest dir>/features/<namespace>/` plus the
/// manifest itself. Videos must all belong to `ns`.
void write_features(const std::filesystem::path& manifest_path, FeatureNamespace ns,
                    const std::map<std::string, VideoFeatures>& videos);

std::vector<SubtitleSegment> load_subtitles(const std::filesystem::path& path);
void write_subtitles(const std::filesystem::path& path, const std::vector<SubtitleSegment>& segments);

std::filesystem::path task_file(const std::filesystem::path& dir, TaskId task, SplitId split);
std::filesystem::path manifest_file(const std::filesystem::path& dir, std::optional<NamespaceName> ns);

/// Loads and validates one task's bundle. With `ns` unset the loader takes
/// features.json, falling back to the first features.<ns>.json present.
/// Throws Error with the code of the first violation found.
DatasetBundle load_task_data(TaskId task, const std::filesystem::path& dir,
                             std::optional<NamespaceName> ns = std::nullopt);

/// Writes split files (and subtitles.jsonl when any exist); features are
/// written separately with write_features.
void write_task_data(const DatasetBundle& bundle, const std::filesystem::path& dir);

/// All invariant violations, sorted by (record, rule). Pure.
std::vector<Violation> validate_bundle(const DatasetBundle& bundle);

}  // namespace clipvl
