// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <string_view>

#include "clipvl/autodiff.hpp"
#include "clipvl/error.hpp"
#include "clipvl/rng.hpp"

namespace clipvl {

/// Ordered name -> dense array store. Names sort lexicographically, which
/// fixes iteration (and therefore serialization) order.
template <typename Scalar>
class ParamStore {
 public:
  using MatrixType = Matrix<Scalar>;
  using Map = std::map<std::string, MatrixType>;

  void add(const std::string& name, MatrixType value) {
    if (!entries_.emplace(name, std::move(value)).second) {
      throw Error(Errc::InvalidArgument, "duplicate parameter " + name);
    }
  }

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  const MatrixType& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error(Errc::MissingParameter, name);
    return it->second;
  }
  MatrixType& at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error(Errc::MissingParameter, name);
    return it->second;
  }

  const Map& entries() const { return entries_; }
  Map& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }

  Index total_elements() const {
    Index n = 0;
    for (const auto& [_, m] : entries_) n += m.size();
    return n;
  }

  template <typename Other>
  ParamStore<Other> cast() const {
    ParamStore<Other> out;
    for (const auto& [name, m] : entries_) out.add(name, m.template cast<Other>());
    return out;
  }

  // Initializers used by the model builders.
  void add_normal(const std::string& name, Index rows, Index cols, double stddev, Rng& rng) {
    MatrixType m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
      for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(stddev * rng.normal());
    }
    add(name, std::move(m));
  }
  void add_zeros(const std::string& name, Index rows, Index cols) {
    add(name, MatrixType::Zero(rows, cols));
  }
  void add_constant(const std::string& name, Index rows, Index cols, Scalar value) {
    add(name, MatrixType::Constant(rows, cols, value));
  }

 private:
  Map entries_;
};

inline bool has_prefix(std::string_view name, std::string_view prefix) {
  return name.substr(0, prefix.size()) == prefix;
}

}  // namespace clipvl
