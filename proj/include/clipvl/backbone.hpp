// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

// Cross-Modal Transformer (frame + subtitle fusion, also used to encode
// queries) and Temporal Transformer (contextualized frame sequence).

#pragma once

#include <vector>

#include "clipvl/autodiff.hpp"
#include "clipvl/corpus.hpp"
#include "clipvl/model.hpp"
#include "clipvl/textenc.hpp"

namespace clipvl {

/// One subtitle segment ready for fusion: its inclusive frame range and the
/// text-front-end output for its tokens.
template <typename Scalar>
struct SubtitleEncoding {
  int start_frame = 0;
  int end_frame = 0;
  EncodedText<Scalar> text;
  std::vector<int> token_ids;  // ordering key only
};

template <typename Scalar>
struct FusedFrames {
  Var<Scalar> frame_reps;  // F x d_model
  Vector<Scalar> frame_mask;
};

template <typename Scalar>
struct ContextualizedFrames {
  Var<Scalar> frame_reps;  // F x d_model
  Var<Scalar> pooled;      // 1 x d_model
  Vector<Scalar> frame_mask;
};

template <typename Scalar>
struct EncodedQuery {
  Var<Scalar> per_token;  // L x d_model
  Var<Scalar> pooled;     // 1 x d_model
  Vector<Scalar> mask;
};

// Value-level results.
template <typename Scalar>
struct FusedVideo {
  Matrix<Scalar> frame_reps;
  Vector<Scalar> frame_mask;
};

template <typename Scalar>
struct ContextualizedVideo {
  Matrix<Scalar> frame_reps;
  RowVector<Scalar> pooled;
  Vector<Scalar> frame_mask;
};

template <typename Scalar>
struct QueryRep {
  RowVector<Scalar> pooled;
  Matrix<Scalar> per_token;
};

/// Namespace-specific linear projection + LayerNorm per frame.
/// Throws NamespaceMismatch when the model has no projection for the
/// features' namespace or the widths disagree.
template <typename Scalar>
Var<Scalar> project_video(const ForwardContext<Scalar>& fw, const VideoFeatures& features);

/// Local-window fusion. Each subtitle segment forms one window
/// [its frames; its tokens]; maximal runs of frames covered by no segment
/// form frame-only windows. Every window goes through the cm blocks with
/// bidirectional attention; a frame's fused row is the mean of its rows over
/// the windows containing it. Windows are processed in canonical
/// (start, end, token ids) order, so segment order never matters.
template <typename Scalar>
FusedFrames<Scalar> cross_modal_fuse(const ForwardContext<Scalar>& fw, const Var<Scalar>& projected,
                                     std::vector<SubtitleEncoding<Scalar>> subtitles);

/// Learned temporal positions + tt blocks over the frame tokens; pooled is
/// the masked mean of the output rows.
template <typename Scalar>
ContextualizedFrames<Scalar> temporal_encode(const ForwardContext<Scalar>& fw, const FusedFrames<Scalar>& fused);

/// Text front end, then cm blocks over the text alone; pooled = masked mean.
/// Throws MissingParameter if `choice` is not the configured front end.
template <typename Scalar>
EncodedQuery<Scalar> encode_query(const ForwardContext<Scalar>& fw, const TokenSequence& tokens,
                                  TextEncoderKind choice);

template <typename Scalar>
EncodedQuery<Scalar> encode_query(const ForwardContext<Scalar>& fw, const TokenSequence& tokens) {
  return encode_query(fw, tokens, fw.config().text.kind);
}

/// A video plus its tokenized subtitle track.
struct VideoInput {
  const VideoFeatures* features = nullptr;
  std::vector<SubtitleSegment> segments;
  std::vector<TokenSequence> segment_tokens;  // parallel to segments
};

/// project_video -> cross_modal_fuse -> temporal_encode.
template <typename Scalar>
ContextualizedFrames<Scalar> encode_video(const ForwardContext<Scalar>& fw, const VideoInput& video);

// Value-level wrappers (fresh tape per call, dropout off).
template <typename Scalar>
Matrix<Scalar> project_video(const VideoFeatures& features, const ModelState<Scalar>& state);

template <typename Scalar>
FusedVideo<Scalar> cross_modal_fuse(const Matrix<Scalar>& projected, const std::vector<SubtitleSegment>& segments,
                                    const std::vector<TextEncoding<Scalar>>& encodings,
                                    const ModelState<Scalar>& state);

template <typename Scalar>
ContextualizedVideo<Scalar> temporal_encode(const FusedVideo<Scalar>& fused, const ModelState<Scalar>& state);

template <typename Scalar>
QueryRep<Scalar> encode_query(const TokenSequence& tokens, TextEncoderKind choice, const ModelState<Scalar>& state);

template <typename Scalar>
ContextualizedVideo<Scalar> encode_video(const VideoInput& video, const ModelState<Scalar>& state);

void init_backbone(ParamStore<double>& store, Rng& rng, const ModelConfig& config);

}  // namespace clipvl
