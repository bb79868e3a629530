// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

// Tokenization and the two interchangeable text front ends: a plain
// embedding layer and a CLIP-style causal transformer tower. Both return
// one d_model row per input token, so everything downstream is agnostic to
// which one is configured.

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "clipvl/autodiff.hpp"
#include "clipvl/checkpoint.hpp"
#include "clipvl/model.hpp"

namespace clipvl {

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr int kReserved = 4;

  /// Reserved tokens only.
  Vocabulary();

  /// Reserved ids followed by the sorted, de-duplicated words of `texts`.
  static Vocabulary build(const std::vector<std::string>& texts);

  /// JSON object token -> id; ids must be dense and the reserved ids fixed.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int id(std::string_view word) const;
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  /// Words of the payload (reserved ids dropped), space separated.
  std::string detokenize(const std::vector<int>& ids) const;

 private:
  void push(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<int> mask;

  int length() const { return static_cast<int>(ids.size()); }
  int payload_length() const;

  template <typename Scalar>
  Vector<Scalar> mask_vector() const {
    Vector<Scalar> m(static_cast<Index>(mask.size()));
    for (std::size_t i = 0; i < mask.size(); ++i) m(static_cast<Index>(i)) = static_cast<Scalar>(mask[i]);
    return m;
  }
};

/// BOS, up to max_len-2 words, EOS, then PAD up to max_len.
TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_len);

/// BOS first EOS second EOS, padded to max_len. EOS doubles as separator.
/// When too long, words of `first` are dropped before words of `second`.
TokenSequence tokenize_pair(std::string_view first, std::string_view second, const Vocabulary& vocab,
                            int max_len);

/// Token-level output on the tape.
template <typename Scalar>
struct EncodedText {
  Var<Scalar> per_token;  // L x d_model
  Vector<Scalar> mask;    // L
};

/// Token-level output as plain values.
template <typename Scalar>
struct TextEncoding {
  Matrix<Scalar> per_token;
  Vector<Scalar> mask;
};

/// LayerNorm(token + position) per token; PAD rows zeroed.
template <typename Scalar>
EncodedText<Scalar> encode_embedding(const ForwardContext<Scalar>& fw, const TokenSequence& tokens);

/// Token + position embeddings, causal pre-norm blocks, final LayerNorm and
/// a d_encoder -> d_model projection; PAD rows zeroed.
template <typename Scalar>
EncodedText<Scalar> encode_clip_style(const ForwardContext<Scalar>& fw, const TokenSequence& tokens);

/// Dispatches on `kind`; the matching parameters must be present.
template <typename Scalar>
EncodedText<Scalar> encode_text(const ForwardContext<Scalar>& fw, const TokenSequence& tokens, TextEncoderKind kind);

template <typename Scalar>
TextEncoding<Scalar> encode_embedding(const TokenSequence& tokens, const ModelState<Scalar>& state);
template <typename Scalar>
TextEncoding<Scalar> encode_clip_style(const TokenSequence& tokens, const ModelState<Scalar>& state);

void init_text_encoder(ParamStore<double>& store, Rng& rng, const ModelConfig& config);

inline constexpr std::string_view kTextEncoderPrefix = "textenc.";

struct PretrainedTextEncoder {
  ParamStore<float> params;       // only textenc.* arrays
  std::vector<ArrayShape> report;  // one entry per loaded array
};

/// Reads the text-encoder arrays for `config` from a checkpoint directory.
/// Throws MissingParameter / ShapeMismatch naming the offending array.
PretrainedTextEncoder load_pretrained_text_encoder(const std::filesystem::path& checkpoint_dir,
                                                   const ModelConfig& config);

}  // namespace clipvl
