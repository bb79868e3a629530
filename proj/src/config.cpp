// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/config.hpp"

#include <cstdio>
#include <set>

#include "clipvl/error.hpp"
#include "clipvl/text.hpp"

using nlohmann::json;

namespace clipvl {

std::string_view to_string(TextEncoderKind kind) {
  return kind == TextEncoderKind::ClipStyle ? "clip_style" : "embedding_layer";
}

std::optional<TextEncoderKind> parse_text_encoder(std::string_view text) {
  if (text == "clip_style" || text == "clip") return TextEncoderKind::ClipStyle;
  if (text == "embedding_layer" || text == "embedding") return TextEncoderKind::EmbeddingLayer;
  return std::nullopt;
}

ModelConfig ModelConfig::toy(int vocab_size, std::vector<FeatureNamespace> namespaces) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.backbone.namespaces = std::move(namespaces);
  return c;
}

ModelConfig ModelConfig::full(int vocab_size, std::vector<FeatureNamespace> namespaces) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.text.num_layers = 12;
  c.text.num_heads = 8;
  c.text.d_encoder = 512;
  c.text.ff_dim = 2048;
  c.text.max_len = 77;
  c.backbone.d_model = 768;
  c.backbone.cm_layers = 6;
  c.backbone.cm_heads = 12;
  c.backbone.tt_layers = 3;
  c.backbone.tt_heads = 12;
  c.backbone.ff_dim = 3072;
  c.backbone.max_frames = 100;
  c.backbone.namespaces = std::move(namespaces);
  c.heads.decoder_heads = 12;
  c.heads.max_caption_len = 30;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidArgument, "model config: " + what); };
  if (vocab_size < 5) fail("vocab_size must cover the reserved ids plus one word");
  const auto& b = backbone;
  if (b.d_model < 1 || b.ff_dim < 1 || b.max_frames < 1) fail("backbone widths must be positive");
  if (b.cm_layers < 0 || b.tt_layers < 0) fail("layer counts must be >= 0");
  if (b.cm_heads < 1 || b.d_model % b.cm_heads != 0) fail("d_model not divisible by cm_heads");
  if (b.tt_heads < 1 || b.d_model % b.tt_heads != 0) fail("d_model not divisible by tt_heads");
  if (!(b.dropout >= 0.0 && b.dropout < 1.0)) fail("dropout outside [0,1)");
  if (b.namespaces.empty()) fail("at least one feature namespace");
  std::set<NamespaceName> names;
  for (const auto& ns : b.namespaces) {
    if (ns.dim < 1) fail("namespace dim must be >= 1");
    if (!names.insert(ns.name).second) fail("duplicate namespace");
  }
  if (text.max_len < 3) fail("text max_len must be >= 3");
  if (text.kind == TextEncoderKind::ClipStyle) {
    if (text.d_encoder < 1 || text.num_heads < 1 || text.d_encoder % text.num_heads != 0) {
      fail("d_encoder not divisible by num_heads");
    }
    if (text.num_layers < 0 || text.ff_dim < 1) fail("clip_style layer settings");
  }
  if (heads.decoder_heads < 1 || b.d_model % heads.decoder_heads != 0) fail("d_model not divisible by decoder_heads");
  if (heads.decoder_layers < 0 || heads.max_caption_len < 2) fail("decoder settings");
  for (TaskId t : heads.qa_tasks) {
    if (task_kind(t) != TaskKind::QA) fail("qa_tasks lists a non-QA task");
  }
}

std::optional<FeatureNamespace> ModelConfig::find_namespace(NamespaceName name) const {
  for (const auto& ns : backbone.namespaces) {
    if (ns.name == name) return ns;
  }
  return std::nullopt;
}

json ModelConfig::to_json() const {
  json namespaces = json::array();
  for (const auto& ns : backbone.namespaces) namespaces.push_back({{"name", to_string(ns.name)}, {"dim", ns.dim}});
  json qa = json::array();
  for (TaskId t : heads.qa_tasks) qa.push_back(slug(t));
  return json{
      {"vocab_size", vocab_size},
      {"text",
       {{"kind", to_string(text.kind)},
        {"num_layers", text.num_layers},
        {"num_heads", text.num_heads},
        {"d_encoder", text.d_encoder},
        {"ff_dim", text.ff_dim},
        {"max_len", text.max_len}}},
      {"backbone",
       {{"d_model", backbone.d_model},
        {"cm_layers", backbone.cm_layers},
        {"cm_heads", backbone.cm_heads},
        {"tt_layers", backbone.tt_layers},
        {"tt_heads", backbone.tt_heads},
        {"ff_dim", backbone.ff_dim},
        {"dropout", backbone.dropout},
        {"max_frames", backbone.max_frames},
        {"namespaces", namespaces}}},
      {"heads",
       {{"decoder_layers", heads.decoder_layers},
        {"decoder_heads", heads.decoder_heads},
        {"max_caption_len", heads.max_caption_len},
        {"qa_tasks", qa}}},
  };
}

ModelConfig ModelConfig::from_json(const json& j) {
  try {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    const auto& t = j.at("text");
    const auto kind = parse_text_encoder(t.at("kind").get<std::string>());
    if (!kind) throw Error(Errc::SchemaError, "unknown text encoder kind");
    c.text.kind = *kind;
    c.text.num_layers = t.at("num_layers").get<int>();
    c.text.num_heads = t.at("num_heads").get<int>();
    c.text.d_encoder = t.at("d_encoder").get<int>();
    c.text.ff_dim = t.at("ff_dim").get<int>();
    c.text.max_len = t.at("max_len").get<int>();
    const auto& b = j.at("backbone");
    c.backbone.d_model = b.at("d_model").get<int>();
    c.backbone.cm_layers = b.at("cm_layers").get<int>();
    c.backbone.cm_heads = b.at("cm_heads").get<int>();
    c.backbone.tt_layers = b.at("tt_layers").get<int>();
    c.backbone.tt_heads = b.at("tt_heads").get<int>();
    c.backbone.ff_dim = b.at("ff_dim").get<int>();
    c.backbone.dropout = b.at("dropout").get<double>();
    c.backbone.max_frames = b.at("max_frames").get<int>();
    c.backbone.namespaces.clear();
    for (const auto& ns : b.at("namespaces")) {
      const auto name = parse_namespace(ns.at("name").get<std::string>());
      if (!name) throw Error(Errc::SchemaError, "unknown namespace");
      c.backbone.namespaces.push_back({*name, ns.at("dim").get<int>()});
    }
    const auto& h = j.at("heads");
    c.heads.decoder_layers = h.at("decoder_layers").get<int>();
    c.heads.decoder_heads = h.at("decoder_heads").get<int>();
    c.heads.max_caption_len = h.at("max_caption_len").get<int>();
    c.heads.qa_tasks.clear();
    for (const auto& s : h.at("qa_tasks")) {
      const auto task = parse_task(s.get<std::string>());
      if (!task) throw Error(Errc::SchemaError, "unknown qa task");
      c.heads.qa_tasks.push_back(*task);
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, std::string("model config: ") + e.what());
  }
}

std::string ModelConfig::fingerprint() const {
  json j = to_json();
  j["backbone"].erase("dropout");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
  return buf;
}

}  // namespace clipvl
