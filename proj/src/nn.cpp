// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/nn.hpp"

namespace clipvl {

void add_linear(ParamStore<double>& store, Rng& rng, const std::string& prefix, int in, int out, bool bias) {
  store.add_normal(prefix + ".w", in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  if (bias) store.add_zeros(prefix + ".b", 1, out);
}

void add_norm(ParamStore<double>& store, const std::string& prefix, int width) {
  store.add_constant(prefix + ".g", 1, width, 1.0);
  store.add_zeros(prefix + ".b", 1, width);
}

void add_attention(ParamStore<double>& store, Rng& rng, const std::string& prefix, int width) {
  for (const char* part : {".q", ".k", ".v", ".o"}) add_linear(store, rng, prefix + part, width, width);
}

void add_encoder_block(ParamStore<double>& store, Rng& rng, const std::string& prefix, int width, int ff_dim) {
  add_norm(store, prefix + ".ln1", width);
  add_attention(store, rng, prefix + ".attn", width);
  add_norm(store, prefix + ".ln2", width);
  add_linear(store, rng, prefix + ".ff.fc1", width, ff_dim);
  add_linear(store, rng, prefix + ".ff.fc2", ff_dim, width);
}

void add_decoder_block(ParamStore<double>& store, Rng& rng, const std::string& prefix, int width, int ff_dim) {
  add_norm(store, prefix + ".ln1", width);
  add_attention(store, rng, prefix + ".self", width);
  add_norm(store, prefix + ".ln2", width);
  add_attention(store, rng, prefix + ".cross", width);
  add_norm(store, prefix + ".ln3", width);
  add_linear(store, rng, prefix + ".ff.fc1", width, ff_dim);
  add_linear(store, rng, prefix + ".ff.fc2", ff_dim, width);
}

}  // namespace clipvl
