// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

// Finetuning strategies, draw schedules, batch losses, the AdamW optimizer
// and the finite-difference gradient check.

#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clipvl/backbone.hpp"
#include "clipvl/corpus.hpp"
#include "clipvl/model.hpp"
#include "clipvl/textenc.hpp"

namespace clipvl {

enum class StrategyKind { ST, AT_ST, MIXED };
enum class Regime { ST, AT, ATThenST };
enum class InitKind { Scratch, HeroCheckpoint, ClipTextCheckpoint };

std::string_view to_string(StrategyKind kind);
std::optional<StrategyKind> parse_strategy(std::string_view text);
std::string_view to_string(Regime regime);
std::optional<Regime> parse_regime(std::string_view text);
std::string_view to_string(InitKind kind);
std::optional<InitKind> parse_init(std::string_view text);

struct InitSpec {
  InitKind kind = InitKind::Scratch;
  std::optional<std::filesystem::path> path;

  friend bool operator==(const InitSpec&, const InitSpec&) = default;
};

struct StrategyConfig {
  TaskId task = TaskId::TVR;
  Regime regime = Regime::ST;
  NamespaceName feature_namespace = NamespaceName::ClipVitSlowfast;
  std::vector<SplitId> finetune_splits{SplitId::Train};
  InitSpec init{InitKind::HeroCheckpoint, std::nullopt};
  TextEncoderKind text_encoder = TextEncoderKind::EmbeddingLayer;

  /// Throws InvalidArgument when val is used by a task outside the
  /// train+val set, or when a clip_style encoder is combined with a
  /// hero checkpoint.
  void validate() const;

  nlohmann::json to_json() const;
  static StrategyConfig from_json(const nlohmann::json& j);

  friend bool operator==(const StrategyConfig&, const StrategyConfig&) = default;
};

/// Tasks whose finetuning pool is train + val under the mixed recipe.
bool finetunes_on_val(TaskId task);

StrategyConfig select_strategy(TaskId task, StrategyKind kind);

/// The tasks trained jointly in an AT phase for `task` under `kind`: the QA
/// tasks for a QA target under MIXED, every task under AT_ST, and nothing
/// otherwise.
std::vector<TaskId> at_members(TaskId task, StrategyKind kind);

struct Draw {
  TaskId task = TaskId::TVR;
  int phase = 0;                // index into TrainSchedule::phase_epochs
  int epoch = 0;
  std::vector<int> examples;   // indices into the task's training pool

  friend bool operator==(const Draw&, const Draw&) = default;
};

struct TrainSchedule {
  std::vector<Draw> draws;
  std::vector<int> phase_epochs;
};

struct ScheduleOptions {
  int epochs = 1;         // per phase
  int batch_size = 4;
  std::uint64_t seed = 0;
};

/// Builds the draw sequence. Configs with regime AT or ATThenST form one
/// joint phase: each epoch runs C cycles, C being the largest member's
/// batches per epoch, and every cycle draws one batch from each member in
/// leaderboard order (members with fewer batches start a fresh shuffled
/// pass). Every ATThenST config then gets a single-task phase; ST configs
/// get single-task phases in the order given. `pool_sizes` maps each task
/// to the size of its finetuning pool. Throws EmptySplit for an empty pool.
TrainSchedule build_schedule(std::span<const StrategyConfig> configs, const std::map<TaskId, int>& pool_sizes,
                             const ScheduleOptions& options);

/// The finetuning pool: examples of the given splits, in split order.
std::vector<const TaskExample*> training_pool(const DatasetBundle& bundle, std::span<const SplitId> splits);

/// Turns records into model inputs.
class Featurizer {
 public:
  Featurizer(const Vocabulary& vocab, const ModelConfig& config) : vocab_(&vocab), config_(&config) {}

  const Vocabulary& vocab() const { return *vocab_; }
  TokenSequence text(std::string_view text) const;
  TokenSequence pair(std::string_view first, std::string_view second) const;
  TokenSequence caption(std::string_view text) const;
  VideoInput video(const DatasetBundle& bundle, const std::string& video_id) const;

 private:
  const Vocabulary* vocab_;
  const ModelConfig* config_;
};

struct Batch {
  TaskId task = TaskId::TVR;
  const DatasetBundle* bundle = nullptr;
  std::vector<const TaskExample*> examples;
  /// Retrieval only: videos scored as negatives in addition to the batch's
  /// positives.
  std::vector<std::string> extra_videos;
};

/// Mean task loss over the batch: symmetric contrastive loss over the
/// batch's distinct videos (retrieval), candidate cross-entropy (QA), or
/// teacher-forced cross-entropy over every reference (captioning).
template <typename Scalar>
Var<Scalar> batch_loss(const ForwardContext<Scalar>& fw, const Batch& batch, const Featurizer& featurizer);

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double clip_norm = 1.0;  // <= 0 disables clipping
  /// Parameters under these name prefixes are never updated.
  std::vector<std::string> frozen_prefixes;
};

template <typename Scalar>
struct AdamState {
  std::map<std::string, Matrix<Scalar>> m;
  std::map<std::string, Matrix<Scalar>> v;
  long step = 0;
};

/// One AdamW step over the parameters present in `grads` (others are not
/// touched, weight decay included). Returns the gradient norm before
/// clipping.
template <typename Scalar>
double adam_update(ParamStore<Scalar>& params, std::map<std::string, Matrix<Scalar>> grads, AdamState<Scalar>& state,
                   const AdamOptions& options);

struct StepResult {
  double loss = 0.0;
  double grad_norm = 0.0;
};

/// Forward, backward and update. Throws NonFiniteLoss (leaving the state
/// unchanged) when the loss or a gradient is not finite.
template <typename Scalar>
StepResult train_step(ModelState<Scalar>& state, AdamState<Scalar>& optimizer, const Batch& batch,
                      const Featurizer& featurizer, const AdamOptions& options, Rng* dropout_rng);

using ProbeLoss = std::function<Var<double>(const ForwardContext<double>&)>;

struct GradCheckOptions {
  double step = 1e-4;
  double tolerance = 1e-3;
  /// Coordinates checked per group: the largest-|gradient| half plus a random
  /// half. Groups this small or smaller are checked in full.
  int coords_per_group = 8;
  std::uint64_t seed = 0;
  /// Applied to the analytic gradients before comparison (harness tests).
  std::function<void(std::map<std::string, Matrix<double>>&)> tamper;
};

struct GradCheckGroup {
  std::string name;
  int checked = 0;
  double rel_error = 0.0;   // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double abs_error = 0.0;   // max |analytic - numeric|
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckGroup> groups;
  bool passed() const;
  double max_rel_error() const;
};

/// Compares analytic gradients of `loss` against central differences for
/// every parameter group the loss touches.
GradCheckReport gradient_check(const ModelState<double>& state, const ProbeLoss& loss,
                               const GradCheckOptions& options = {});

}  // namespace clipvl
