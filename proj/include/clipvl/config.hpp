// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "clipvl/corpus.hpp"
#include "clipvl/tasks.hpp"

namespace clipvl {

enum class TextEncoderKind { EmbeddingLayer, ClipStyle };

std::string_view to_string(TextEncoderKind kind);
std::optional<TextEncoderKind> parse_text_encoder(std::string_view text);

struct TextEncoderConfig {
  TextEncoderKind kind = TextEncoderKind::EmbeddingLayer;
  // clip_style only
  int num_layers = 2;
  int num_heads = 2;
  int d_encoder = 8;
  int ff_dim = 32;
  // shared: size of the position table, i.e. the longest token sequence
  int max_len = 24;
};

struct BackboneConfig {
  int d_model = 32;
  int cm_layers = 2;
  int cm_heads = 2;
  int tt_layers = 2;
  int tt_heads = 2;
  int ff_dim = 64;
  double dropout = 0.1;
  int max_frames = 32;
  std::vector<FeatureNamespace> namespaces;
};

struct HeadsConfig {
  int decoder_layers = 2;
  int decoder_heads = 2;
  int max_caption_len = 16;
  std::vector<TaskId> qa_tasks{kQaTasks.begin(), kQaTasks.end()};
};

struct ModelConfig {
  int vocab_size = 0;
  TextEncoderConfig text;
  BackboneConfig backbone;
  HeadsConfig heads;

  /// Desk-scale profile used by tests and fixtures.
  static ModelConfig toy(int vocab_size, std::vector<FeatureNamespace> namespaces);
  /// Published-width profile (12-layer, 8-head CLIP-style text tower).
  static ModelConfig full(int vocab_size, std::vector<FeatureNamespace> namespaces);

  /// Throws Error(InvalidArgument) on inconsistent settings.
  void validate() const;

  std::optional<FeatureNamespace> find_namespace(NamespaceName name) const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);

  /// Hash of every shape-determining field (dropout excluded), hex encoded.
  std::string fingerprint() const;
};

}  // namespace clipvl
