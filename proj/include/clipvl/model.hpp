// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "clipvl/autodiff.hpp"
#include "clipvl/config.hpp"
#include "clipvl/params.hpp"
#include "clipvl/rng.hpp"

namespace clipvl {

/// Everything a checkpoint carries: the config that built the network, its
/// parameters and the seed that initialized them.
template <typename Scalar>
struct ModelState {
  ModelConfig config;
  ParamStore<Scalar> params;
  std::uint64_t seed = 0;

  template <typename Other>
  ModelState<Other> cast() const {
    return ModelState<Other>{config, params.template cast<Other>(), seed};
  }
};

/// Builds every parameter (text front end, backbone, heads) for `config`.
/// Initialization runs in double and is cast, so float and double states
/// from one seed agree up to rounding.
template <typename Scalar>
ModelState<Scalar> init_model(const ModelConfig& config, std::uint64_t seed);

extern template ModelState<float> init_model<float>(const ModelConfig&, std::uint64_t);
extern template ModelState<double> init_model<double>(const ModelConfig&, std::uint64_t);

/// Per-call forward state: the tape being recorded, the parameters it reads,
/// and whether dropout is active.
template <typename Scalar>
struct ForwardContext {
  Graph<Scalar>& graph;
  const ModelState<Scalar>& state;
  bool training = false;
  Rng* rng = nullptr;

  const ModelConfig& config() const { return state.config; }

  Var<Scalar> p(const std::string& name) const { return graph.param(name, state.params.at(name)); }
  bool has(const std::string& name) const { return state.params.contains(name); }

  Var<Scalar> drop(const Var<Scalar>& x) const {
    if (!training || rng == nullptr) return x;
    return dropout(x, state.config.backbone.dropout, *rng);
  }
};

}  // namespace clipvl
