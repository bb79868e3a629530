// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

// Transformer building blocks shared by the text encoder, the backbone and
// the caption decoder. All blocks are pre-norm with a GELU feed-forward.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "clipvl/autodiff.hpp"
#include "clipvl/model.hpp"

namespace clipvl {

using AllowMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// allowed(i, j) = key_mask(j) != 0 && (!causal || j <= i).
template <typename Scalar>
AllowMask attention_mask(Index queries, const Vector<Scalar>& key_mask, bool causal) {
  AllowMask allowed(queries, key_mask.size());
  for (Index i = 0; i < queries; ++i) {
    for (Index j = 0; j < key_mask.size(); ++j) {
      allowed(i, j) = key_mask(j) != Scalar(0) && (!causal || j <= i);
    }
  }
  return allowed;
}

template <typename Scalar>
Var<Scalar> linear(const ForwardContext<Scalar>& fw, const std::string& prefix, const Var<Scalar>& x) {
  Var<Scalar> y = matmul(x, fw.p(prefix + ".w"));
  if (fw.has(prefix + ".b")) y = add_row(y, fw.p(prefix + ".b"));
  return y;
}

template <typename Scalar>
Var<Scalar> norm(const ForwardContext<Scalar>& fw, const std::string& prefix, const Var<Scalar>& x) {
  return layer_norm(x, fw.p(prefix + ".g"), fw.p(prefix + ".b"));
}

template <typename Scalar>
Var<Scalar> multi_head_attention(const ForwardContext<Scalar>& fw, const std::string& prefix,
                                 const Var<Scalar>& queries, const Var<Scalar>& keys_values,
                                 const AllowMask& allowed, int heads) {
  const Var<Scalar> q = linear(fw, prefix + ".q", queries);
  const Var<Scalar> k = linear(fw, prefix + ".k", keys_values);
  const Var<Scalar> v = linear(fw, prefix + ".v", keys_values);
  const Index head_dim = q.cols() / heads;
  const Scalar scale = Scalar(1) / std::sqrt(static_cast<Scalar>(head_dim));
  std::vector<Var<Scalar>> outputs;
  for (int h = 0; h < heads; ++h) {
    const Var<Scalar> qh = heads == 1 ? q : slice_cols(q, h * head_dim, head_dim);
    const Var<Scalar> kh = heads == 1 ? k : slice_cols(k, h * head_dim, head_dim);
    const Var<Scalar> vh = heads == 1 ? v : slice_cols(v, h * head_dim, head_dim);
    const Var<Scalar> probs = masked_softmax(matmul_nt(qh, kh) * scale, allowed);
    outputs.push_back(matmul(probs, vh));
  }
  return linear(fw, prefix + ".o", heads == 1 ? outputs.front() : hstack(outputs));
}

template <typename Scalar>
Var<Scalar> feed_forward(const ForwardContext<Scalar>& fw, const std::string& prefix, const Var<Scalar>& x) {
  return linear(fw, prefix + ".fc2", gelu(linear(fw, prefix + ".fc1", x)));
}

/// Self-attention block: x + Attn(LN(x)), then + FF(LN(.)).
template <typename Scalar>
Var<Scalar> encoder_block(const ForwardContext<Scalar>& fw, const std::string& prefix, const Var<Scalar>& x,
                          const AllowMask& allowed, int heads) {
  const Var<Scalar> normed = norm(fw, prefix + ".ln1", x);
  const Var<Scalar> h = x + fw.drop(multi_head_attention(fw, prefix + ".attn", normed, normed, allowed, heads));
  return h + fw.drop(feed_forward(fw, prefix + ".ff", norm(fw, prefix + ".ln2", h)));
}

/// Causal self-attention, cross-attention over `memory`, feed-forward.
template <typename Scalar>
Var<Scalar> decoder_block(const ForwardContext<Scalar>& fw, const std::string& prefix, const Var<Scalar>& x,
                          const AllowMask& self_allowed, const Var<Scalar>& memory,
                          const AllowMask& cross_allowed, int heads) {
  const Var<Scalar> n1 = norm(fw, prefix + ".ln1", x);
  Var<Scalar> h = x + fw.drop(multi_head_attention(fw, prefix + ".self", n1, n1, self_allowed, heads));
  const Var<Scalar> n2 = norm(fw, prefix + ".ln2", h);
  h = h + fw.drop(multi_head_attention(fw, prefix + ".cross", n2, memory, cross_allowed, heads));
  return h + fw.drop(feed_forward(fw, prefix + ".ff", norm(fw, prefix + ".ln3", h)));
}

// Parameter builders (double precision; see init_model).
void add_linear(ParamStore<double>& store, Rng& rng, const std::string& prefix, int in, int out, bool bias = true);
void add_norm(ParamStore<double>& store, const std::string& prefix, int width);
void add_attention(ParamStore<double>& store, Rng& rng, const std::string& prefix, int width);
void add_encoder_block(ParamStore<double>& store, Rng& rng, const std::string& prefix, int width, int ff_dim);
void add_decoder_block(ParamStore<double>& store, Rng& rng, const std::string& prefix, int width, int ff_dim);

}  // namespace clipvl
