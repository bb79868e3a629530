// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end runs behind the command line: finetune a strategy, write
// prediction files from a checkpoint, and score predictions against gold.

#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "clipvl/metrics.hpp"
#include "clipvl/trainer.hpp"

namespace clipvl {

enum class Profile { Toy, Full };

std::optional<Profile> parse_profile(std::string_view text);
/// CLIPVL_PROFILE when set to toy/full, else Toy.
Profile default_profile();

struct RunConfig {
  TaskId task = TaskId::TVR;
  StrategyKind strategy = StrategyKind::MIXED;
  std::filesystem::path data_dir;
  /// Checkpoint for hero_checkpoint / clip_text_checkpoint init; absent means
  /// the run starts from scratch.
  std::optional<std::filesystem::path> init_checkpoint;
  std::filesystem::path checkpoint_out;
  std::optional<std::filesystem::path> report_out;  // default <checkpoint_out>/train_report.json
  std::uint64_t seed = 0;
  int epochs = 1;
  int batch_size = 4;
  Profile profile = Profile::Toy;
  AdamOptions optimizer;
  std::optional<int> max_steps;
  bool dropout = true;
  /// Keep the text front end at its initial values.
  bool freeze_text_encoder = false;

  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; `task`, `data_dir` and
  /// `checkpoint_out` are required.
  static RunConfig from_json(const nlohmann::json& j);
};

struct FinetuneResult {
  StrategyConfig strategy;
  std::vector<TaskId> tasks;  // every task trained in the run
  std::vector<double> losses;
  ModelState<float> state;
  Vocabulary vocab;
};

/// Runs the strategy for `config.task`, saves the checkpoint (plus
/// vocab.json and strategy.json) and the loss report. Progress notes go to
/// `log`.
FinetuneResult finetune(const RunConfig& config, std::ostream& log);

struct EvalConfig {
  std::filesystem::path checkpoint;
  std::filesystem::path data_dir;
  TaskId task = TaskId::TVR;
  SplitId split = SplitId::Val;
  std::optional<NamespaceName> feature_namespace;
  int beam = 1;
};

/// Prediction records, one JSON object per example: retrieval
/// {query_id, ranked_video_ids}, QA {example_id, predicted_index},
/// captioning {video_id, caption_text}.
std::vector<nlohmann::json> evaluate(const EvalConfig& config);

/// Same as evaluate() over an in-memory model.
std::vector<nlohmann::json> predict(const ModelState<float>& state, const Vocabulary& vocab,
                                    const DatasetBundle& bundle, SplitId split, int beam = 1);

void write_jsonl(const std::filesystem::path& path, const std::vector<nlohmann::json>& records);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

/// The task's metric over one split. Every gold record needs a prediction
/// (SchemaError otherwise).
TaskScore score_predictions(TaskId task, const std::vector<TaskExample>& gold,
                            const std::vector<nlohmann::json>& predictions);

}  // namespace clipvl
