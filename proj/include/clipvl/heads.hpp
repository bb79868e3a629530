// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

// Task heads: cosine retrieval scoring with a learned temperature, a
// per-task multiple-choice QA scorer, and a weight-tied caption decoder with
// beam search.

#pragma once

#include <functional>
#include <vector>

#include "clipvl/autodiff.hpp"
#include "clipvl/backbone.hpp"
#include "clipvl/model.hpp"
#include "clipvl/tasks.hpp"
#include "clipvl/textenc.hpp"

namespace clipvl {

/// Q x V matrix of cos(query, video) / tau, tau = exp(-logit_scale).
template <typename Scalar>
Var<Scalar> retrieval_scores(const ForwardContext<Scalar>& fw, const std::vector<Var<Scalar>>& query_pooled,
                             const std::vector<Var<Scalar>>& video_pooled);

/// Symmetric cross-entropy: mean of the query->video term (row softmax at the
/// gold column) and the video->query term (column softmax at the same cell).
/// gold[q] is the column index of query q's positive video.
template <typename Scalar>
Var<Scalar> retrieval_loss(const Var<Scalar>& scores, const std::vector<int>& gold);

/// One logit per candidate: encode_query(question EOS candidate), concat
/// with the pooled video, two-layer GELU MLP. Returns 1 x |candidates|.
template <typename Scalar>
Var<Scalar> qa_logits(const ForwardContext<Scalar>& fw, TaskId task, const ContextualizedFrames<Scalar>& video,
                      const std::vector<TokenSequence>& question_candidate_pairs);

template <typename Scalar>
Var<Scalar> qa_loss(const Var<Scalar>& logits, int gold_index);

/// Decoder logits (L x |V|) for each position of `input_ids`.
template <typename Scalar>
Var<Scalar> caption_logits(const ForwardContext<Scalar>& fw, const Var<Scalar>& frame_reps,
                           const Vector<Scalar>& frame_mask, const std::vector<int>& input_ids,
                           const Vector<Scalar>& input_mask);

/// Teacher-forced mean cross-entropy over non-PAD target positions.
/// `gold` must start with BOS and contain EOS.
template <typename Scalar>
Var<Scalar> caption_loss(const ForwardContext<Scalar>& fw, const ContextualizedFrames<Scalar>& video,
                         const TokenSequence& gold);

struct CaptionHypothesis {
  std::vector<int> tokens;  // BOS ... EOS (no EOS when truncated)
  double log_prob = 0.0;
  bool truncated = false;   // no EOS within max_len
};

/// Log-probabilities over the full vocabulary for the next token.
using NextTokenScorer = std::function<Vector<double>(const std::vector<int>& prefix)>;

/// Beam search over every token except PAD and BOS. Each step keeps the
/// `beam` best expansions; expansions ending in EOS are set aside as
/// finished. Stops when nothing is live, when the best finished hypothesis
/// is at least as likely as every live one, or at max_len tokens. beam = 1
/// is exactly greedy decoding.
CaptionHypothesis beam_search(const NextTokenScorer& scorer, int vocab_size, int beam, int max_len);

template <typename Scalar>
CaptionHypothesis caption_decode(const ModelState<Scalar>& state, const ContextualizedVideo<Scalar>& video, int beam,
                                 int max_len);

template <typename Scalar>
NextTokenScorer caption_scorer(const ModelState<Scalar>& state, const ContextualizedVideo<Scalar>& video);

// Value-level wrappers.
template <typename Scalar>
Matrix<Scalar> retrieval_score(const std::vector<QueryRep<Scalar>>& queries,
                               const std::vector<ContextualizedVideo<Scalar>>& videos, const ModelState<Scalar>& state);

template <typename Scalar>
Scalar retrieval_loss(const Matrix<Scalar>& scores, const std::vector<int>& gold);

template <typename Scalar>
RowVector<Scalar> qa_forward(const ContextualizedVideo<Scalar>& video, TaskId task,
                             const std::vector<TokenSequence>& question_candidate_pairs,
                             const ModelState<Scalar>& state);

template <typename Scalar>
Scalar caption_loss(const ContextualizedVideo<Scalar>& video, const TokenSequence& gold,
                    const ModelState<Scalar>& state);

void init_heads(ParamStore<double>& store, Rng& rng, const ModelConfig& config);

}  // namespace clipvl
