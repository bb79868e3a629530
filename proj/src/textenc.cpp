// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/textenc.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>

#include "clipvl/error.hpp"
#include "clipvl/nn.hpp"
#include "clipvl/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace clipvl {

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) push(t);
}

void Vocabulary::push(std::string token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  std::set<std::string> words;
  for (const auto& t : texts) {
    for (auto& w : split_words(t)) words.insert(std::move(w));
  }
  Vocabulary v;
  for (const auto& w : words) {
    if (!v.ids_.count(w)) v.push(w);
  }
  return v;
}

Vocabulary Vocabulary::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw Error(Errc::SchemaError, "vocabulary must be a JSON object");
  std::vector<std::string> by_id(j.size());
  std::vector<bool> filled(j.size(), false);
  for (const auto& [token, value] : j.items()) {
    if (!value.is_number_integer()) throw Error(Errc::SchemaError, "vocabulary id for '" + token + "'");
    const auto id = value.get<long long>();
    if (id < 0 || id >= static_cast<long long>(by_id.size()) || filled[id]) {
      throw Error(Errc::SchemaError, "vocabulary ids must be dense and unique");
    }
    by_id[id] = token;
    filled[id] = true;
  }
  Vocabulary reserved;
  for (int i = 0; i < kReserved; ++i) {
    if (by_id.size() <= static_cast<std::size_t>(i) || by_id[i] != reserved.tokens_[i]) {
      throw Error(Errc::SchemaError, "reserved id " + std::to_string(i) + " must be " + reserved.tokens_[i]);
    }
  }
  Vocabulary v;
  for (std::size_t i = kReserved; i < by_id.size(); ++i) v.push(by_id[i]);
  return v;
}

void Vocabulary::save(const fs::path& path) const {
  json j = json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) j[tokens_[i]] = i;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

int Vocabulary::id(std::string_view word) const {
  auto it = ids_.find(std::string(word));
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw Error(Errc::IdOutOfRange, std::to_string(id));
  return tokens_[id];
}

std::string Vocabulary::detokenize(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    if (!out.empty()) out.push_back(' ');
    out += token(id);
  }
  return out;
}

int TokenSequence::payload_length() const {
  int n = 0;
  for (int id : ids) n += (id != Vocabulary::kPad && id != Vocabulary::kBos && id != Vocabulary::kEos);
  return n;
}

namespace {

TokenSequence wrap(const std::vector<int>& payload, int max_len) {
  TokenSequence seq;
  seq.ids.reserve(max_len);
  seq.ids.push_back(Vocabulary::kBos);
  seq.ids.insert(seq.ids.end(), payload.begin(), payload.end());
  seq.ids.push_back(Vocabulary::kEos);
  seq.mask.assign(seq.ids.size(), 1);
  seq.ids.resize(max_len, Vocabulary::kPad);
  seq.mask.resize(max_len, 0);
  return seq;
}

std::vector<int> word_ids(std::string_view text, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

}  // namespace

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_len) {
  if (max_len < 3) throw Error(Errc::InvalidArgument, "max_len must be >= 3");
  std::vector<int> payload = word_ids(text, vocab);
  if (payload.size() > static_cast<std::size_t>(max_len - 2)) payload.resize(max_len - 2);
  return wrap(payload, max_len);
}

TokenSequence tokenize_pair(std::string_view first, std::string_view second, const Vocabulary& vocab,
                            int max_len) {
  if (max_len < 4) throw Error(Errc::InvalidArgument, "max_len must be >= 4 for a pair");
  std::vector<int> a = word_ids(first, vocab);
  std::vector<int> b = word_ids(second, vocab);
  const std::size_t budget = static_cast<std::size_t>(max_len - 3);
  if (b.size() > budget) b.resize(budget);
  if (a.size() > budget - b.size()) a.resize(budget - b.size());
  a.push_back(Vocabulary::kEos);
  a.insert(a.end(), b.begin(), b.end());
  return wrap(a, max_len);
}

// ---------------------------------------------------------------------------
// Encoders

namespace {

template <typename Scalar>
void check_length(const ForwardContext<Scalar>& fw, const TokenSequence& tokens) {
  if (tokens.length() < 1) throw Error(Errc::InvalidArgument, "empty token sequence");
  if (tokens.length() > fw.config().text.max_len) {
    throw Error(Errc::SequenceTooLong, std::to_string(tokens.length()) + " tokens > max_len " +
                                           std::to_string(fw.config().text.max_len));
  }
  if (tokens.mask.size() != tokens.ids.size()) throw Error(Errc::InvalidArgument, "mask length differs from ids");
}

template <typename Scalar>
Var<Scalar> positions(const ForwardContext<Scalar>& fw, const std::string& table, int length) {
  return slice_rows(fw.p(table), 0, length);
}

}  // namespace

template <typename Scalar>
EncodedText<Scalar> encode_embedding(const ForwardContext<Scalar>& fw, const TokenSequence& tokens) {
  check_length(fw, tokens);
  const Vector<Scalar> mask = tokens.mask_vector<Scalar>();
  const Var<Scalar> x = gather_rows(fw.p("textenc.embed.tok"), tokens.ids) +
                        positions(fw, "textenc.embed.pos", tokens.length());
  return {scale_rows(norm(fw, "textenc.embed.ln", x), mask), mask};
}

template <typename Scalar>
EncodedText<Scalar> encode_clip_style(const ForwardContext<Scalar>& fw, const TokenSequence& tokens) {
  check_length(fw, tokens);
  const auto& cfg = fw.config().text;
  const Vector<Scalar> mask = tokens.mask_vector<Scalar>();
  Var<Scalar> x = gather_rows(fw.p("textenc.clip.tok"), tokens.ids) +
                  positions(fw, "textenc.clip.pos", tokens.length());
  const AllowMask allowed = attention_mask<Scalar>(tokens.length(), mask, /*causal=*/true);
  for (int i = 0; i < cfg.num_layers; ++i) {
    x = encoder_block(fw, "textenc.clip.block" + std::to_string(i), x, allowed, cfg.num_heads);
  }
  x = linear(fw, "textenc.clip.proj", norm(fw, "textenc.clip.ln_final", x));
  return {scale_rows(x, mask), mask};
}

template <typename Scalar>
EncodedText<Scalar> encode_text(const ForwardContext<Scalar>& fw, const TokenSequence& tokens, TextEncoderKind kind) {
  return kind == TextEncoderKind::ClipStyle ? encode_clip_style(fw, tokens) : encode_embedding(fw, tokens);
}

template <typename Scalar>
TextEncoding<Scalar> encode_embedding(const TokenSequence& tokens, const ModelState<Scalar>& state) {
  Graph<Scalar> graph;
  const ForwardContext<Scalar> fw{graph, state};
  auto enc = encode_embedding(fw, tokens);
  return {enc.per_token.value(), enc.mask};
}

template <typename Scalar>
TextEncoding<Scalar> encode_clip_style(const TokenSequence& tokens, const ModelState<Scalar>& state) {
  Graph<Scalar> graph;
  const ForwardContext<Scalar> fw{graph, state};
  auto enc = encode_clip_style(fw, tokens);
  return {enc.per_token.value(), enc.mask};
}

void init_text_encoder(ParamStore<double>& store, Rng& rng, const ModelConfig& config) {
  const auto& t = config.text;
  const int d = config.backbone.d_model;
  if (t.kind == TextEncoderKind::EmbeddingLayer) {
    store.add_normal("textenc.embed.tok", config.vocab_size, d, 0.1, rng);
    store.add_normal("textenc.embed.pos", t.max_len, d, 0.1, rng);
    add_norm(store, "textenc.embed.ln", d);
    return;
  }
  store.add_normal("textenc.clip.tok", config.vocab_size, t.d_encoder, 0.1, rng);
  store.add_normal("textenc.clip.pos", t.max_len, t.d_encoder, 0.1, rng);
  for (int i = 0; i < t.num_layers; ++i) {
    add_encoder_block(store, rng, "textenc.clip.block" + std::to_string(i), t.d_encoder, t.ff_dim);
  }
  add_norm(store, "textenc.clip.ln_final", t.d_encoder);
  add_linear(store, rng, "textenc.clip.proj", t.d_encoder, d, /*bias=*/false);
}

PretrainedTextEncoder load_pretrained_text_encoder(const fs::path& checkpoint_dir, const ModelConfig& config) {
  // Build only the text tower to get the expected name/shape table.
  ParamStore<double> expected;
  Rng rng(0);
  init_text_encoder(expected, rng, config);
  PretrainedTextEncoder out;
  out.params = expected.cast<float>();
  const std::vector<std::string> prefixes{std::string(kTextEncoderPrefix)};
  out.report = load_checkpoint_prefixes(checkpoint_dir, out.params, prefixes);
  return out;
}

#define CLIPVL_INSTANTIATE(S)                                                                            \
  template EncodedText<S> encode_embedding<S>(const ForwardContext<S>&, const TokenSequence&);           \
  template EncodedText<S> encode_clip_style<S>(const ForwardContext<S>&, const TokenSequence&);          \
  template EncodedText<S> encode_text<S>(const ForwardContext<S>&, const TokenSequence&, TextEncoderKind); \
  template TextEncoding<S> encode_embedding<S>(const TokenSequence&, const ModelState<S>&);               \
  template TextEncoding<S> encode_clip_style<S>(const TokenSequence&, const ModelState<S>&);
CLIPVL_INSTANTIATE(float)
CLIPVL_INSTANTIATE(double)
#undef CLIPVL_INSTANTIATE

}  // namespace clipvl
