// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#include "clipvl/model.hpp"

#include "clipvl/backbone.hpp"
#include "clipvl/heads.hpp"
#include "clipvl/textenc.hpp"

namespace clipvl {

template <typename Scalar>
ModelState<Scalar> init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ParamStore<double> store;
  Rng rng(seed);
  init_text_encoder(store, rng, config);
  init_backbone(store, rng, config);
  init_heads(store, rng, config);
  return ModelState<Scalar>{config, store.cast<Scalar>(), seed};
}

template ModelState<float> init_model<float>(const ModelConfig&, std::uint64_t);
template ModelState<double> init_model<double>(const ModelConfig&, std::uint64_t);

}  // namespace clipvl
