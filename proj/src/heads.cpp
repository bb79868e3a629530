// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/heads.hpp"

#include <algorithm>
#include <cmath>

#include "clipvl/error.hpp"
#include "clipvl/nn.hpp"

namespace clipvl {

template <typename Scalar>
Var<Scalar> retrieval_scores(const ForwardContext<Scalar>& fw, const std::vector<Var<Scalar>>& query_pooled,
                             const std::vector<Var<Scalar>>& video_pooled) {
  if (query_pooled.empty() || video_pooled.empty()) throw Error(Errc::InvalidArgument, "empty retrieval batch");
  const Var<Scalar> q = normalize_rows(vstack(query_pooled));
  const Var<Scalar> v = normalize_rows(vstack(video_pooled));
  return scale_by(matmul_nt(q, v), exp(fw.p("heads.retrieval.logit_scale")));
}

template <typename Scalar>
Var<Scalar> retrieval_loss(const Var<Scalar>& scores, const std::vector<int>& gold) {
  if (static_cast<Index>(gold.size()) != scores.rows()) {
    throw Error(Errc::LengthMismatch, "one gold video per query");
  }
  std::vector<std::pair<Index, Index>> q2v, v2q;
  for (std::size_t q = 0; q < gold.size(); ++q) {
    q2v.emplace_back(static_cast<Index>(q), gold[q]);
    v2q.emplace_back(gold[q], static_cast<Index>(q));
  }
  return (cross_entropy(scores, q2v) + cross_entropy(transpose(scores), v2q)) * Scalar(0.5);
}

template <typename Scalar>
Var<Scalar> qa_logits(const ForwardContext<Scalar>& fw, TaskId task, const ContextualizedFrames<Scalar>& video,
                      const std::vector<TokenSequence>& pairs) {
  if (pairs.size() < 2) throw Error(Errc::InvalidArgument, "QA needs at least 2 candidates");
  const std::string prefix = "heads.qa." + std::string(slug(task));
  std::vector<Var<Scalar>> logits;
  for (const auto& tokens : pairs) {
    const Var<Scalar> joint = hstack<Scalar>({encode_query(fw, tokens).pooled, video.pooled});
    logits.push_back(linear(fw, prefix + ".fc2", gelu(linear(fw, prefix + ".fc1", joint))));
  }
  return hstack(logits);
}

template <typename Scalar>
Var<Scalar> qa_loss(const Var<Scalar>& logits, int gold_index) {
  return cross_entropy(logits, {{0, static_cast<Index>(gold_index)}});
}

template <typename Scalar>
Var<Scalar> caption_logits(const ForwardContext<Scalar>& fw, const Var<Scalar>& frame_reps,
                           const Vector<Scalar>& frame_mask, const std::vector<int>& input_ids,
                           const Vector<Scalar>& input_mask) {
  const auto& h = fw.config().heads;
  const Index length = static_cast<Index>(input_ids.size());
  if (length < 1) throw Error(Errc::InvalidArgument, "empty decoder input");
  if (length > h.max_caption_len) {
    throw Error(Errc::SequenceTooLong, "decoder input longer than max_caption_len");
  }
  const Var<Scalar> table = fw.p("heads.caption.tok");
  Var<Scalar> x = gather_rows(table, input_ids) + slice_rows(fw.p("heads.caption.pos"), 0, length);
  const AllowMask self_allowed = attention_mask<Scalar>(length, input_mask, /*causal=*/true);
  const AllowMask cross_allowed = attention_mask<Scalar>(length, frame_mask, /*causal=*/false);
  for (int i = 0; i < h.decoder_layers; ++i) {
    x = decoder_block(fw, "heads.caption.block" + std::to_string(i), x, self_allowed, frame_reps, cross_allowed,
                      h.decoder_heads);
  }
  return matmul_nt(norm(fw, "heads.caption.ln_final", x), table);
}

template <typename Scalar>
Var<Scalar> caption_loss(const ForwardContext<Scalar>& fw, const ContextualizedFrames<Scalar>& video,
                         const TokenSequence& gold) {
  const int n = gold.length();
  if (n < 2 || gold.ids.front() != Vocabulary::kBos) throw Error(Errc::InvalidArgument, "gold must start with BOS");
  if (std::find(gold.ids.begin(), gold.ids.end(), Vocabulary::kEos) == gold.ids.end()) {
    throw Error(Errc::InvalidArgument, "gold must contain EOS");
  }
  const std::vector<int> inputs(gold.ids.begin(), gold.ids.end() - 1);
  Vector<Scalar> input_mask(n - 1);
  std::vector<std::pair<Index, Index>> targets;
  for (int i = 0; i + 1 < n; ++i) {
    input_mask(i) = static_cast<Scalar>(gold.mask[i]);
    if (gold.ids[i + 1] != Vocabulary::kPad) targets.emplace_back(i, gold.ids[i + 1]);
  }
  return cross_entropy(caption_logits(fw, video.frame_reps, video.frame_mask, inputs, input_mask), targets);
}

CaptionHypothesis beam_search(const NextTokenScorer& scorer, int vocab_size, int beam, int max_len) {
  if (beam < 1) throw Error(Errc::InvalidArgument, "beam must be >= 1");
  if (max_len < 2) throw Error(Errc::InvalidArgument, "max_len must be >= 2");
  struct Hyp {
    std::vector<int> tokens;
    double log_prob;
  };
  auto better = [](const Hyp& a, const Hyp& b) {
    if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
    return a.tokens < b.tokens;
  };

  std::vector<Hyp> live{{{Vocabulary::kBos}, 0.0}};
  std::vector<Hyp> finished;
  for (int length = 2; length <= max_len && !live.empty(); ++length) {
    std::vector<Hyp> expansions;
    for (const Hyp& h : live) {
      const Vector<double> lp = scorer(h.tokens);
      if (lp.size() != vocab_size) throw Error(Errc::ShapeMismatch, "scorer returned wrong vocabulary size");
      for (int t = 0; t < vocab_size; ++t) {
        if (t == Vocabulary::kPad || t == Vocabulary::kBos) continue;
        Hyp next{h.tokens, h.log_prob + lp(t)};
        next.tokens.push_back(t);
        expansions.push_back(std::move(next));
      }
    }
    const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(beam), expansions.size());
    std::partial_sort(expansions.begin(), expansions.begin() + keep, expansions.end(), better);
    expansions.resize(keep);
    live.clear();
    for (auto& h : expansions) {
      if (h.tokens.back() == Vocabulary::kEos) finished.push_back(std::move(h));
      else live.push_back(std::move(h));
    }
    if (!finished.empty() && !live.empty()) {
      const double best_finished = std::min_element(finished.begin(), finished.end(), better)->log_prob;
      if (best_finished >= live.front().log_prob) break;
    }
  }
  if (!finished.empty()) {
    const Hyp& best = *std::min_element(finished.begin(), finished.end(), better);
    return {best.tokens, best.log_prob, false};
  }
  const Hyp& best = *std::min_element(live.begin(), live.end(), better);
  return {best.tokens, best.log_prob, true};
}

template <typename Scalar>
NextTokenScorer caption_scorer(const ModelState<Scalar>& state, const ContextualizedVideo<Scalar>& video) {
  return [&state, &video](const std::vector<int>& prefix) {
    Graph<Scalar> graph;
    const ForwardContext<Scalar> fw{graph, state};
    const Vector<Scalar> mask = Vector<Scalar>::Ones(static_cast<Index>(prefix.size()));
    const Var<Scalar> logits =
        caption_logits(fw, graph.constant(video.frame_reps), video.frame_mask, prefix, mask);
    const Vector<double> last = logits.value().row(logits.rows() - 1).transpose().template cast<double>();
    const double mx = last.maxCoeff();
    const double lse = mx + std::log((last.array() - mx).exp().sum());
    return Vector<double>((last.array() - lse).matrix());
  };
}

template <typename Scalar>
CaptionHypothesis caption_decode(const ModelState<Scalar>& state, const ContextualizedVideo<Scalar>& video, int beam,
                                 int max_len) {
  if (max_len > state.config.heads.max_caption_len) {
    throw Error(Errc::SequenceTooLong, "decode max_len exceeds max_caption_len");
  }
  return beam_search(caption_scorer(state, video), state.config.vocab_size, beam, max_len);
}

template <typename Scalar>
Matrix<Scalar> retrieval_score(const std::vector<QueryRep<Scalar>>& queries,
                               const std::vector<ContextualizedVideo<Scalar>>& videos, const ModelState<Scalar>& state) {
  Graph<Scalar> graph;
  const ForwardContext<Scalar> fw{graph, state};
  std::vector<Var<Scalar>> q, v;
  for (const auto& x : queries) q.push_back(graph.constant(x.pooled));
  for (const auto& x : videos) v.push_back(graph.constant(x.pooled));
  return retrieval_scores(fw, q, v).value();
}

template <typename Scalar>
Scalar retrieval_loss(const Matrix<Scalar>& scores, const std::vector<int>& gold) {
  Graph<Scalar> graph;
  return retrieval_loss(graph.constant(scores), gold).value()(0, 0);
}

template <typename Scalar>
RowVector<Scalar> qa_forward(const ContextualizedVideo<Scalar>& video, TaskId task,
                             const std::vector<TokenSequence>& pairs, const ModelState<Scalar>& state) {
  Graph<Scalar> graph;
  const ForwardContext<Scalar> fw{graph, state};
  const ContextualizedFrames<Scalar> ctx{graph.constant(video.frame_reps), graph.constant(video.pooled),
                                         video.frame_mask};
  return qa_logits(fw, task, ctx, pairs).value();
}

template <typename Scalar>
Scalar caption_loss(const ContextualizedVideo<Scalar>& video, const TokenSequence& gold,
                    const ModelState<Scalar>& state) {
  Graph<Scalar> graph;
  const ForwardContext<Scalar> fw{graph, state};
  const ContextualizedFrames<Scalar> ctx{graph.constant(video.frame_reps), graph.constant(video.pooled),
                                         video.frame_mask};
  return caption_loss(fw, ctx, gold).value()(0, 0);
}

void init_heads(ParamStore<double>& store, Rng& rng, const ModelConfig& config) {
  const int d = config.backbone.d_model;
  store.add_constant("heads.retrieval.logit_scale", 1, 1, std::log(10.0));
  for (TaskId task : config.heads.qa_tasks) {
    const std::string prefix = "heads.qa." + std::string(slug(task));
    add_linear(store, rng, prefix + ".fc1", 2 * d, d);
    add_linear(store, rng, prefix + ".fc2", d, 1);
  }
  store.add_normal("heads.caption.tok", config.vocab_size, d, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  store.add_normal("heads.caption.pos", config.heads.max_caption_len, d, 0.1, rng);
  for (int i = 0; i < config.heads.decoder_layers; ++i) {
    add_decoder_block(store, rng, "heads.caption.block" + std::to_string(i), d, config.backbone.ff_dim);
  }
  add_norm(store, "heads.caption.ln_final", d);
}

#define CLIPVL_INSTANTIATE(S)                                                                                       \
  template Var<S> retrieval_scores<S>(const ForwardContext<S>&, const std::vector<Var<S>>&,                         \
                                      const std::vector<Var<S>>&);                                                  \
  template Var<S> retrieval_loss<S>(const Var<S>&, const std::vector<int>&);                                        \
  template Var<S> qa_logits<S>(const ForwardContext<S>&, TaskId, const ContextualizedFrames<S>&,                    \
                               const std::vector<TokenSequence>&);                                                  \
  template Var<S> qa_loss<S>(const Var<S>&, int);                                                                   \
  template Var<S> caption_logits<S>(const ForwardContext<S>&, const Var<S>&, const Vector<S>&,                      \
                                    const std::vector<int>&, const Vector<S>&);                                     \
  template Var<S> caption_loss<S>(const ForwardContext<S>&, const ContextualizedFrames<S>&, const TokenSequence&);  \
  template NextTokenScorer caption_scorer<S>(const ModelState<S>&, const ContextualizedVideo<S>&);                   \
  template CaptionHypothesis caption_decode<S>(const ModelState<S>&, const ContextualizedVideo<S>&, int, int);      \
  template Matrix<S> retrieval_score<S>(const std::vector<QueryRep<S>>&, const std::vector<ContextualizedVideo<S>>&, \
                                        const ModelState<S>&);                                                      \
  template S retrieval_loss<S>(const Matrix<S>&, const std::vector<int>&);                                          \
  template RowVector<S> qa_forward<S>(const ContextualizedVideo<S>&, TaskId, const std::vector<TokenSequence>&,     \
                                      const ModelState<S>&);                                                        \
  template S caption_loss<S>(const ContextualizedVideo<S>&, const TokenSequence&, const ModelState<S>&);
CLIPVL_INSTANTIATE(float)
CLIPVL_INSTANTIATE(double)
#undef CLIPVL_INSTANTIATE

}  // namespace clipvl
