// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/backbone.hpp"

#include <algorithm>
#include <tuple>

#include "clipvl/error.hpp"
#include "clipvl/nn.hpp"

namespace clipvl {

namespace {

std::string projection_prefix(NamespaceName ns) { return "backbone.vproj." + std::string(to_string(ns)); }

template <typename Scalar>
Var<Scalar> cm_stack(const ForwardContext<Scalar>& fw, Var<Scalar> x, const Vector<Scalar>& key_mask) {
  const auto& b = fw.config().backbone;
  const AllowMask allowed = attention_mask<Scalar>(x.rows(), key_mask, /*causal=*/false);
  for (int i = 0; i < b.cm_layers; ++i) {
    x = encoder_block(fw, "backbone.cm.block" + std::to_string(i), x, allowed, b.cm_heads);
  }
  return x;
}

struct Window {
  int start;
  int end;
  int subtitle;  // index into the sorted subtitle list, -1 for frame-only
};

}  // namespace

template <typename Scalar>
Var<Scalar> project_video(const ForwardContext<Scalar>& fw, const VideoFeatures& features) {
  const auto ns = fw.config().find_namespace(features.ns.name);
  if (!ns || ns->dim != features.ns.dim || features.frames.cols() != ns->dim) {
    throw Error(Errc::NamespaceMismatch, "video '" + features.video_id + "' has " +
                                             std::string(to_string(features.ns.name)) + " features (D=" +
                                             std::to_string(features.frames.cols()) + ") the model has no projection for");
  }
  const std::string prefix = projection_prefix(ns->name);
  const Var<Scalar> frames = fw.graph.constant(features.frames.template cast<Scalar>());
  return norm(fw, prefix + ".ln", linear(fw, prefix, frames));
}

template <typename Scalar>
FusedFrames<Scalar> cross_modal_fuse(const ForwardContext<Scalar>& fw, const Var<Scalar>& projected,
                                     std::vector<SubtitleEncoding<Scalar>> subtitles) {
  const int frames = static_cast<int>(projected.rows());
  for (const auto& s : subtitles) {
    if (s.start_frame < 0 || s.start_frame > s.end_frame || s.end_frame >= frames) {
      throw Error(Errc::SpanOutOfRange, "subtitle frames [" + std::to_string(s.start_frame) + "," +
                                            std::to_string(s.end_frame) + "] vs F=" + std::to_string(frames));
    }
  }
  std::stable_sort(subtitles.begin(), subtitles.end(), [](const auto& a, const auto& b) {
    return std::tie(a.start_frame, a.end_frame, a.token_ids) < std::tie(b.start_frame, b.end_frame, b.token_ids);
  });

  std::vector<Window> windows;
  std::vector<int> cover(frames, 0);
  for (std::size_t i = 0; i < subtitles.size(); ++i) {
    windows.push_back({subtitles[i].start_frame, subtitles[i].end_frame, static_cast<int>(i)});
    for (int f = subtitles[i].start_frame; f <= subtitles[i].end_frame; ++f) ++cover[f];
  }
  for (int f = 0; f < frames;) {
    if (cover[f] > 0) {
      ++f;
      continue;
    }
    int g = f;
    while (g + 1 < frames && cover[g + 1] == 0) ++g;
    windows.push_back({f, g, -1});
    for (int k = f; k <= g; ++k) ++cover[k];
    f = g + 1;
  }
  std::sort(windows.begin(), windows.end(), [](const Window& a, const Window& b) {
    return std::tie(a.start, a.end, a.subtitle) < std::tie(b.start, b.end, b.subtitle);
  });

  const Var<Scalar> types = fw.p("backbone.cm.type");
  const Var<Scalar> frame_type = slice_rows(types, 0, 1);
  const Var<Scalar> text_type = slice_rows(types, 1, 1);
  const Var<Scalar> typed_frames = add_row(projected, frame_type);

  std::vector<Var<Scalar>> terms;
  for (const Window& w : windows) {
    const int n = w.end - w.start + 1;
    Var<Scalar> seq = slice_rows(typed_frames, w.start, n);
    Vector<Scalar> key_mask = Vector<Scalar>::Ones(n);
    if (w.subtitle >= 0) {
      const auto& text = subtitles[w.subtitle].text;
      seq = vstack<Scalar>({seq, add_row(text.per_token, text_type)});
      key_mask.conservativeResize(n + text.mask.size());
      key_mask.tail(text.mask.size()) = text.mask;
    }
    Var<Scalar> out = cm_stack(fw, seq, key_mask);
    if (out.rows() != n) out = slice_rows(out, 0, n);
    if (windows.size() == 1) {
      terms.push_back(out);
      break;
    }
    Matrix<Scalar> scatter = Matrix<Scalar>::Zero(frames, n);
    for (int i = 0; i < n; ++i) scatter(w.start + i, i) = Scalar(1) / static_cast<Scalar>(cover[w.start + i]);
    terms.push_back(matmul(fw.graph.constant(std::move(scatter)), out));
  }
  return {norm(fw, "backbone.cm.ln_final", sum(terms)), Vector<Scalar>::Ones(frames)};
}

template <typename Scalar>
ContextualizedFrames<Scalar> temporal_encode(const ForwardContext<Scalar>& fw, const FusedFrames<Scalar>& fused) {
  const auto& b = fw.config().backbone;
  const Index frames = fused.frame_reps.rows();
  if (frames < 1) throw Error(Errc::InvalidArgument, "temporal_encode needs F >= 1");
  if (frames > b.max_frames) {
    throw Error(Errc::SequenceTooLong, std::to_string(frames) + " frames > max_frames " + std::to_string(b.max_frames));
  }
  Var<Scalar> x = fused.frame_reps + slice_rows(fw.p("backbone.tt.pos"), 0, frames);
  const AllowMask allowed = attention_mask<Scalar>(frames, fused.frame_mask, /*causal=*/false);
  for (int i = 0; i < b.tt_layers; ++i) {
    x = encoder_block(fw, "backbone.tt.block" + std::to_string(i), x, allowed, b.tt_heads);
  }
  x = norm(fw, "backbone.tt.ln_final", x);
  return {x, masked_mean_rows(x, fused.frame_mask), fused.frame_mask};
}

template <typename Scalar>
EncodedQuery<Scalar> encode_query(const ForwardContext<Scalar>& fw, const TokenSequence& tokens,
                                  TextEncoderKind choice) {
  const EncodedText<Scalar> text = encode_text(fw, tokens, choice);
  const Var<Scalar> text_type = slice_rows(fw.p("backbone.cm.type"), 1, 1);
  Var<Scalar> x = cm_stack(fw, add_row(text.per_token, text_type), text.mask);
  x = norm(fw, "backbone.cm.ln_final", x);
  return {x, masked_mean_rows(x, text.mask), text.mask};
}

template <typename Scalar>
ContextualizedFrames<Scalar> encode_video(const ForwardContext<Scalar>& fw, const VideoInput& video) {
  if (video.features == nullptr) throw Error(Errc::InvalidArgument, "encode_video without features");
  if (video.segments.size() != video.segment_tokens.size()) {
    throw Error(Errc::InvalidArgument, "segments and segment_tokens differ in length");
  }
  const Var<Scalar> projected = project_video(fw, *video.features);
  std::vector<SubtitleEncoding<Scalar>> subs;
  for (std::size_t i = 0; i < video.segments.size(); ++i) {
    subs.push_back({video.segments[i].start_frame, video.segments[i].end_frame,
                    encode_text(fw, video.segment_tokens[i], fw.config().text.kind), video.segment_tokens[i].ids});
  }
  return temporal_encode(fw, cross_modal_fuse(fw, projected, std::move(subs)));
}

template <typename Scalar>
Matrix<Scalar> project_video(const VideoFeatures& features, const ModelState<Scalar>& state) {
  Graph<Scalar> graph;
  const ForwardContext<Scalar> fw{graph, state};
  return project_video(fw, features).value();
}

template <typename Scalar>
FusedVideo<Scalar> cross_modal_fuse(const Matrix<Scalar>& projected, const std::vector<SubtitleSegment>& segments,
                                    const std::vector<TextEncoding<Scalar>>& encodings,
                                    const ModelState<Scalar>& state) {
  if (segments.size() != encodings.size()) throw Error(Errc::InvalidArgument, "one encoding per segment");
  Graph<Scalar> graph;
  const ForwardContext<Scalar> fw{graph, state};
  std::vector<SubtitleEncoding<Scalar>> subs;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    // Ordering key for value-level callers: the segment text's bytes.
    std::vector<int> key(segments[i].text.begin(), segments[i].text.end());
    subs.push_back({segments[i].start_frame, segments[i].end_frame,
                    EncodedText<Scalar>{graph.constant(encodings[i].per_token), encodings[i].mask}, std::move(key)});
  }
  auto fused = cross_modal_fuse(fw, graph.constant(projected), std::move(subs));
  return {fused.frame_reps.value(), fused.frame_mask};
}

template <typename Scalar>
ContextualizedVideo<Scalar> temporal_encode(const FusedVideo<Scalar>& fused, const ModelState<Scalar>& state) {
  Graph<Scalar> graph;
  const ForwardContext<Scalar> fw{graph, state};
  auto ctx = temporal_encode(fw, FusedFrames<Scalar>{graph.constant(fused.frame_reps), fused.frame_mask});
  return {ctx.frame_reps.value(), ctx.pooled.value(), ctx.frame_mask};
}

template <typename Scalar>
QueryRep<Scalar> encode_query(const TokenSequence& tokens, TextEncoderKind choice, const ModelState<Scalar>& state) {
  Graph<Scalar> graph;
  const ForwardContext<Scalar> fw{graph, state};
  auto q = encode_query(fw, tokens, choice);
  return {q.pooled.value(), q.per_token.value()};
}

template <typename Scalar>
ContextualizedVideo<Scalar> encode_video(const VideoInput& video, const ModelState<Scalar>& state) {
  Graph<Scalar> graph;
  const ForwardContext<Scalar> fw{graph, state};
  auto ctx = encode_video(fw, video);
  return {ctx.frame_reps.value(), ctx.pooled.value(), ctx.frame_mask};
}

void init_backbone(ParamStore<double>& store, Rng& rng, const ModelConfig& config) {
  const auto& b = config.backbone;
  for (const auto& ns : b.namespaces) {
    const std::string prefix = projection_prefix(ns.name);
    add_linear(store, rng, prefix, ns.dim, b.d_model);
    add_norm(store, prefix + ".ln", b.d_model);
  }
  store.add_normal("backbone.cm.type", 2, b.d_model, 0.1, rng);
  for (int i = 0; i < b.cm_layers; ++i) {
    add_encoder_block(store, rng, "backbone.cm.block" + std::to_string(i), b.d_model, b.ff_dim);
  }
  add_norm(store, "backbone.cm.ln_final", b.d_model);
  store.add_normal("backbone.tt.pos", b.max_frames, b.d_model, 0.1, rng);
  for (int i = 0; i < b.tt_layers; ++i) {
    add_encoder_block(store, rng, "backbone.tt.block" + std::to_string(i), b.d_model, b.ff_dim);
  }
  add_norm(store, "backbone.tt.ln_final", b.d_model);
}

#define CLIPVL_INSTANTIATE(S)                                                                                   \
  template Var<S> project_video<S>(const ForwardContext<S>&, const VideoFeatures&);                             \
  template FusedFrames<S> cross_modal_fuse<S>(const ForwardContext<S>&, const Var<S>&,                          \
                                              std::vector<SubtitleEncoding<S>>);                                \
  template ContextualizedFrames<S> temporal_encode<S>(const ForwardContext<S>&, const FusedFrames<S>&);         \
  template EncodedQuery<S> encode_query<S>(const ForwardContext<S>&, const TokenSequence&, TextEncoderKind);    \
  template ContextualizedFrames<S> encode_video<S>(const ForwardContext<S>&, const VideoInput&);                \
  template Matrix<S> project_video<S>(const VideoFeatures&, const ModelState<S>&);                              \
  template FusedVideo<S> cross_modal_fuse<S>(const Matrix<S>&, const std::vector<SubtitleSegment>&,             \
                                             const std::vector<TextEncoding<S>>&, const ModelState<S>&);        \
  template ContextualizedVideo<S> temporal_encode<S>(const FusedVideo<S>&, const ModelState<S>&);               \
  template QueryRep<S> encode_query<S>(const TokenSequence&, TextEncoderKind, const ModelState<S>&);            \
  template ContextualizedVideo<S> encode_video<S>(const VideoInput&, const ModelState<S>&);
CLIPVL_INSTANTIATE(float)
CLIPVL_INSTANTIATE(double)
#undef CLIPVL_INSTANTIATE

}  // namespace clipvl
