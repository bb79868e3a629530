// Copyright 2026 The clipvl Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode differentiation over dense Eigen matrices.
//
// A Graph<Scalar> is a tape: every op appends one node holding its forward
// value and a closure that pushes the node's gradient to its parents.
// Vars are cheap handles (graph pointer + node index). Everything is templated
// on the scalar so the same forward code runs in float for training and in
// double for finite-difference verification.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "clipvl/error.hpp"

namespace clipvl {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Index = Eigen::Index;

template <typename Scalar>
class Graph;

template <typename Scalar>
class Var {
 public:
  Var() = default;
  Var(Graph<Scalar>* graph, int id) : graph_(graph), id_(id) {}

  bool valid() const { return graph_ != nullptr; }
  Graph<Scalar>& graph() const { return *graph_; }
  int id() const { return id_; }
  const Matrix<Scalar>& value() const { return graph_->value(id_); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

 private:
  Graph<Scalar>* graph_ = nullptr;
  int id_ = -1;
};

template <typename Scalar>
class Graph {
 public:
  using MatrixType = Matrix<Scalar>;
  using Backprop = std::function<void(Graph&, int)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<Scalar> constant(MatrixType value) { return push(std::move(value), false, {}); }

  /// Differentiable input that is not a named parameter.
  Var<Scalar> leaf(MatrixType value) { return push(std::move(value), true, {}); }

  /// Named parameter leaf; repeated requests for one name share a node.
  Var<Scalar> param(const std::string& name, const MatrixType& value) {
    auto it = params_.find(name);
    if (it != params_.end()) return Var<Scalar>(this, it->second);
    Var<Scalar> v = push(value, true, {});
    params_.emplace(name, v.id());
    return v;
  }

  /// Appends an op node. The node needs a gradient iff any parent does.
  Var<Scalar> record(MatrixType value, std::initializer_list<Var<Scalar>> parents,
                     Backprop backprop) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || nodes_[p.id()].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backprop) : Backprop{});
  }
  Var<Scalar> record(MatrixType value, const std::vector<Var<Scalar>>& parents,
                     Backprop backprop) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || nodes_[p.id()].requires_grad;
    return push(std::move(value), needs, needs ? std::move(backprop) : Backprop{});
  }

  const MatrixType& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool has_grad(int id) const { return nodes_[id].grad.size() > 0; }
  const MatrixType& grad(int id) const { return nodes_[id].grad; }

  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  void backward(const Var<Scalar>& loss) {
    if (loss.rows() != 1 || loss.cols() != 1) {
      throw Error(Errc::InvalidArgument, "backward() needs a 1x1 loss");
    }
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[loss.id()].grad = MatrixType::Ones(1, 1);
    for (int i = loss.id(); i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.backprop && n.grad.size() > 0) n.backprop(*this, i);
    }
  }

  /// Gradients of every named parameter touched by this graph; parameters
  /// that received no gradient come back as zero matrices.
  std::map<std::string, MatrixType> param_grads() const {
    std::map<std::string, MatrixType> out;
    for (const auto& [name, id] : params_) {
      const Node& n = nodes_[id];
      out.emplace(name, n.grad.size() > 0 ? n.grad
                                          : MatrixType::Zero(n.value.rows(), n.value.cols()));
    }
    return out;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Optional sink for attention probability matrices (one entry per head
  /// per attention call), used by tests to inspect row sums.
  void set_attention_log(std::vector<MatrixType>* log) { attention_log_ = log; }
  std::vector<MatrixType>* attention_log() const { return attention_log_; }

 private:
  struct Node {
    MatrixType value;
    MatrixType grad;
    bool requires_grad = false;
    Backprop backprop;
  };

  Var<Scalar> push(MatrixType value, bool requires_grad, Backprop backprop) {
    nodes_.push_back(Node{std::move(value), MatrixType(), requires_grad, std::move(backprop)});
    return Var<Scalar>(this, static_cast<int>(nodes_.size()) - 1);
  }

  std::vector<Node> nodes_;
  std::map<std::string, int> params_;
  std::vector<MatrixType>* attention_log_ = nullptr;
};

namespace detail {
template <typename Scalar>
void require_same_shape(const Var<Scalar>& a, const Var<Scalar>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(Errc::ShapeMismatch, std::string(op) + ": operand shapes differ");
  }
}
}  // namespace detail

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "add");
  const int ia = a.id(), ib = b.id();
  return a.graph().record(a.value() + b.value(), {a, b}, [ia, ib](Graph<Scalar>& g, int self) {
    g.accumulate(ia, g.grad(self));
    g.accumulate(ib, g.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "sub");
  const int ia = a.id(), ib = b.id();
  return a.graph().record(a.value() - b.value(), {a, b}, [ia, ib](Graph<Scalar>& g, int self) {
    g.accumulate(ia, g.grad(self));
    g.accumulate(ib, -g.grad(self));
  });
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, Scalar s) {
  const int ia = a.id();
  return a.graph().record(a.value() * s, {a}, [ia, s](Graph<Scalar>& g, int self) {
    g.accumulate(ia, g.grad(self) * s);
  });
}

template <typename Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& a) {
  return a * s;
}

/// Elementwise product.
template <typename Scalar>
Var<Scalar> hadamard(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::require_same_shape(a, b, "hadamard");
  const int ia = a.id(), ib = b.id();
  return a.graph().record(a.value().cwiseProduct(b.value()), {a, b},
                          [ia, ib](Graph<Scalar>& g, int self) {
                            g.accumulate(ia, g.grad(self).cwiseProduct(g.value(ib)));
                            g.accumulate(ib, g.grad(self).cwiseProduct(g.value(ia)));
                          });
}

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.rows()) throw Error(Errc::ShapeMismatch, "matmul: inner dims differ");
  const int ia = a.id(), ib = b.id();
  return a.graph().record(a.value() * b.value(), {a, b}, [ia, ib](Graph<Scalar>& g, int self) {
    if (g.requires_grad(ia)) g.accumulate(ia, g.grad(self) * g.value(ib).transpose());
    if (g.requires_grad(ib)) g.accumulate(ib, g.value(ia).transpose() * g.grad(self));
  });
}

/// a * b^T
template <typename Scalar>
Var<Scalar> matmul_nt(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.cols() != b.cols()) throw Error(Errc::ShapeMismatch, "matmul_nt: inner dims differ");
  const int ia = a.id(), ib = b.id();
  return a.graph().record(a.value() * b.value().transpose(), {a, b},
                          [ia, ib](Graph<Scalar>& g, int self) {
                            if (g.requires_grad(ia)) g.accumulate(ia, g.grad(self) * g.value(ib));
                            if (g.requires_grad(ib))
                              g.accumulate(ib, g.grad(self).transpose() * g.value(ia));
                          });
}

template <typename Scalar>
Var<Scalar> transpose(const Var<Scalar>& a) {
  const int ia = a.id();
  return a.graph().record(a.value().transpose(), {a}, [ia](Graph<Scalar>& g, int self) {
    g.accumulate(ia, g.grad(self).transpose());
  });
}

/// Adds a 1xC row to every row of x.
template <typename Scalar>
Var<Scalar> add_row(const Var<Scalar>& x, const Var<Scalar>& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw Error(Errc::ShapeMismatch, "add_row: row must be 1 x cols(x)");
  }
  const int ix = x.id(), ir = row.id();
  Matrix<Scalar> out = x.value().rowwise() + row.value().row(0);
  return x.graph().record(std::move(out), {x, row}, [ix, ir](Graph<Scalar>& g, int self) {
    g.accumulate(ix, g.grad(self));
    g.accumulate(ir, g.grad(self).colwise().sum());
  });
}

/// x * s for a 1x1 node s.
template <typename Scalar>
Var<Scalar> scale_by(const Var<Scalar>& x, const Var<Scalar>& s) {
  if (s.rows() != 1 || s.cols() != 1) throw Error(Errc::ShapeMismatch, "scale_by: s must be 1x1");
  const int ix = x.id(), is = s.id();
  return x.graph().record(x.value() * s.value()(0, 0), {x, s}, [ix, is](Graph<Scalar>& g, int self) {
    g.accumulate(ix, g.grad(self) * g.value(is)(0, 0));
    Matrix<Scalar> ds(1, 1);
    ds(0, 0) = g.grad(self).cwiseProduct(g.value(ix)).sum();
    g.accumulate(is, ds);
  });
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& x) {
  const int ix = x.id();
  return x.graph().record(x.value().array().exp().matrix(), {x}, [ix](Graph<Scalar>& g, int self) {
    g.accumulate(ix, g.grad(self).cwiseProduct(g.value(self)));
  });
}

/// Exact (erf-based) GELU.
template <typename Scalar>
Var<Scalar> gelu(const Var<Scalar>& x) {
  const Scalar inv_sqrt2 = Scalar(1) / std::sqrt(Scalar(2));
  Matrix<Scalar> out = x.value().unaryExpr(
      [inv_sqrt2](Scalar v) { return Scalar(0.5) * v * (Scalar(1) + std::erf(v * inv_sqrt2)); });
  const int ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix, inv_sqrt2](Graph<Scalar>& g, int self) {
    const Scalar inv_sqrt_2pi = Scalar(1) / std::sqrt(Scalar(2) * std::numbers::pi_v<Scalar>);
    Matrix<Scalar> d = g.value(ix).unaryExpr([&](Scalar v) {
      return Scalar(0.5) * (Scalar(1) + std::erf(v * inv_sqrt2)) +
             v * std::exp(Scalar(-0.5) * v * v) * inv_sqrt_2pi;
    });
    g.accumulate(ix, g.grad(self).cwiseProduct(d));
  });
}

/// Row-wise layer normalization with a 1xC gain and bias.
template <typename Scalar>
Var<Scalar> layer_norm(const Var<Scalar>& x, const Var<Scalar>& gain, const Var<Scalar>& bias,
                       Scalar eps = Scalar(1e-5)) {
  const Index n = x.rows(), c = x.cols();
  if (gain.cols() != c || bias.cols() != c) throw Error(Errc::ShapeMismatch, "layer_norm: width");
  Matrix<Scalar> xhat(n, c);
  Vector<Scalar> inv_std(n);
  for (Index i = 0; i < n; ++i) {
    const Scalar mean = x.value().row(i).mean();
    const Scalar var = (x.value().row(i).array() - mean).square().mean();
    inv_std(i) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(i) = (x.value().row(i).array() - mean) * inv_std(i);
  }
  Matrix<Scalar> out = (xhat.array().rowwise() * gain.value().row(0).array()).matrix();
  out.rowwise() += bias.value().row(0);
  const int ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.graph().record(
      std::move(out), {x, gain, bias},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph<Scalar>& g, int self) {
        const Matrix<Scalar>& dy = g.grad(self);
        if (g.requires_grad(ig)) g.accumulate(ig, dy.cwiseProduct(xhat).colwise().sum());
        if (g.requires_grad(ib)) g.accumulate(ib, dy.colwise().sum());
        if (g.requires_grad(ix)) {
          Matrix<Scalar> dxhat = (dy.array().rowwise() * g.value(ig).row(0).array()).matrix();
          Matrix<Scalar> dx(dy.rows(), dy.cols());
          for (Index i = 0; i < dy.rows(); ++i) {
            const Scalar m1 = dxhat.row(i).mean();
            const Scalar m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
            dx.row(i) = (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2) * inv_std(i);
          }
          g.accumulate(ix, dx);
        }
      });
}

/// Row-wise softmax restricted to allowed(i, j) entries; disallowed entries
/// get probability exactly 0. A row with nothing allowed is all zeros.
template <typename Scalar>
Var<Scalar> masked_softmax(const Var<Scalar>& x,
                           const Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>& allowed) {
  if (allowed.rows() != x.rows() || allowed.cols() != x.cols()) {
    throw Error(Errc::ShapeMismatch, "masked_softmax: mask shape");
  }
  Matrix<Scalar> p = Matrix<Scalar>::Zero(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (Index j = 0; j < x.cols(); ++j) {
      if (allowed(i, j)) mx = std::max(mx, x.value()(i, j));
    }
    if (!std::isfinite(mx)) continue;
    Scalar total = 0;
    for (Index j = 0; j < x.cols(); ++j) {
      if (allowed(i, j)) {
        p(i, j) = std::exp(x.value()(i, j) - mx);
        total += p(i, j);
      }
    }
    p.row(i) /= total;
  }
  if (auto* log = x.graph().attention_log()) log->push_back(p);
  const int ix = x.id();
  return x.graph().record(std::move(p), {x}, [ix](Graph<Scalar>& g, int self) {
    const Matrix<Scalar>& p = g.value(self);
    const Matrix<Scalar>& dp = g.grad(self);
    Vector<Scalar> dots = p.cwiseProduct(dp).rowwise().sum();
    Matrix<Scalar> dx = p.cwiseProduct(dp.colwise() - dots);
    g.accumulate(ix, dx);
  });
}

/// Looks up rows of an embedding table.
template <typename Scalar>
Var<Scalar> gather_rows(const Var<Scalar>& table, const std::vector<int>& ids) {
  Matrix<Scalar> out(static_cast<Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows()) {
      throw Error(Errc::IdOutOfRange, "id " + std::to_string(ids[i]) + " outside table of " +
                                          std::to_string(table.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = table.value().row(ids[i]);
  }
  const int it = table.id();
  return table.graph().record(std::move(out), {table}, [it, ids](Graph<Scalar>& g, int self) {
    Matrix<Scalar> dt = Matrix<Scalar>::Zero(g.value(it).rows(), g.value(it).cols());
    for (std::size_t i = 0; i < ids.size(); ++i) dt.row(ids[i]) += g.grad(self).row(static_cast<Index>(i));
    g.accumulate(it, dt);
  });
}

template <typename Scalar>
Var<Scalar> slice_rows(const Var<Scalar>& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.rows()) {
    throw Error(Errc::ShapeMismatch, "slice_rows out of range");
  }
  const int ix = x.id();
  return x.graph().record(x.value().middleRows(start, count), {x},
                          [ix, start, count](Graph<Scalar>& g, int self) {
                            Matrix<Scalar> dx = Matrix<Scalar>::Zero(g.value(ix).rows(), g.value(ix).cols());
                            dx.middleRows(start, count) = g.grad(self);
                            g.accumulate(ix, dx);
                          });
}

template <typename Scalar>
Var<Scalar> slice_cols(const Var<Scalar>& x, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > x.cols()) {
    throw Error(Errc::ShapeMismatch, "slice_cols out of range");
  }
  const int ix = x.id();
  return x.graph().record(x.value().middleCols(start, count), {x},
                          [ix, start, count](Graph<Scalar>& g, int self) {
                            Matrix<Scalar> dx = Matrix<Scalar>::Zero(g.value(ix).rows(), g.value(ix).cols());
                            dx.middleCols(start, count) = g.grad(self);
                            g.accumulate(ix, dx);
                          });
}

/// Stacks blocks on top of each other (same column count).
template <typename Scalar>
Var<Scalar> vstack(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw Error(Errc::InvalidArgument, "vstack of nothing");
  Index rows = 0;
  const Index cols = parts.front().cols();
  for (const auto& p : parts) {
    if (p.cols() != cols) throw Error(Errc::ShapeMismatch, "vstack: column counts differ");
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::pair<int, Index>> spans;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.rows();
  }
  return parts.front().graph().record(std::move(out), parts, [spans](Graph<Scalar>& g, int self) {
    for (const auto& [id, offset] : spans) {
      if (g.requires_grad(id)) g.accumulate(id, g.grad(self).middleRows(offset, g.value(id).rows()));
    }
  });
}

/// Places blocks side by side (same row count).
template <typename Scalar>
Var<Scalar> hstack(const std::vector<Var<Scalar>>& parts) {
  if (parts.empty()) throw Error(Errc::InvalidArgument, "hstack of nothing");
  Index cols = 0;
  const Index rows = parts.front().rows();
  for (const auto& p : parts) {
    if (p.rows() != rows) throw Error(Errc::ShapeMismatch, "hstack: row counts differ");
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::pair<int, Index>> spans;
  Index at = 0;
  for (const auto& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    spans.emplace_back(p.id(), at);
    at += p.cols();
  }
  return parts.front().graph().record(std::move(out), parts, [spans](Graph<Scalar>& g, int self) {
    for (const auto& [id, offset] : spans) {
      if (g.requires_grad(id)) g.accumulate(id, g.grad(self).middleCols(offset, g.value(id).cols()));
    }
  });
}

/// Multiplies row i by the constant weights(i).
template <typename Scalar>
Var<Scalar> scale_rows(const Var<Scalar>& x, const Vector<Scalar>& weights) {
  if (weights.size() != x.rows()) throw Error(Errc::ShapeMismatch, "scale_rows: weight count");
  const int ix = x.id();
  return x.graph().record(weights.asDiagonal() * x.value(), {x}, [ix, weights](Graph<Scalar>& g, int self) {
    g.accumulate(ix, weights.asDiagonal() * g.grad(self));
  });
}

/// 1xC mean of the rows whose mask entry is nonzero.
template <typename Scalar>
Var<Scalar> masked_mean_rows(const Var<Scalar>& x, const Vector<Scalar>& mask) {
  if (mask.size() != x.rows()) throw Error(Errc::ShapeMismatch, "masked_mean_rows: mask length");
  const Scalar total = mask.sum();
  if (!(total > 0)) throw Error(Errc::InvalidArgument, "masked_mean_rows: empty mask");
  const RowVector<Scalar> w = (mask / total).transpose();
  const int ix = x.id();
  Matrix<Scalar> out = w * x.value();
  return x.graph().record(std::move(out), {x}, [ix, w](Graph<Scalar>& g, int self) {
    g.accumulate(ix, w.transpose() * g.grad(self));
  });
}

/// Divides each row by its L2 norm (smoothed by a tiny epsilon).
template <typename Scalar>
Var<Scalar> normalize_rows(const Var<Scalar>& x) {
  const Scalar eps = Scalar(1e-12);
  Vector<Scalar> norms = (x.value().rowwise().squaredNorm().array() + eps).sqrt().matrix();
  Matrix<Scalar> out = norms.cwiseInverse().asDiagonal() * x.value();
  const int ix = x.id();
  return x.graph().record(std::move(out), {x}, [ix, norms](Graph<Scalar>& g, int self) {
    const Matrix<Scalar>& y = g.value(self);
    const Matrix<Scalar>& dy = g.grad(self);
    Vector<Scalar> dots = y.cwiseProduct(dy).rowwise().sum();
    Matrix<Scalar> dx = norms.cwiseInverse().asDiagonal() * (dy - dots.asDiagonal() * y);
    g.accumulate(ix, dx);
  });
}

/// Mean over (row, target) pairs of -log softmax(logits.row(row))[target].
template <typename Scalar>
Var<Scalar> cross_entropy(const Var<Scalar>& logits, const std::vector<std::pair<Index, Index>>& pairs) {
  if (pairs.empty()) throw Error(Errc::InvalidArgument, "cross_entropy: no targets");
  const Matrix<Scalar>& z = logits.value();
  Vector<Scalar> lse(z.rows());
  for (Index i = 0; i < z.rows(); ++i) {
    const Scalar mx = z.row(i).maxCoeff();
    lse(i) = mx + std::log((z.row(i).array() - mx).exp().sum());
  }
  Scalar loss = 0;
  for (const auto& [r, t] : pairs) {
    if (r < 0 || r >= z.rows() || t < 0 || t >= z.cols()) {
      throw Error(Errc::IdOutOfRange, "cross_entropy: target outside logits");
    }
    loss += lse(r) - z(r, t);
  }
  const Scalar inv = Scalar(1) / static_cast<Scalar>(pairs.size());
  Matrix<Scalar> out(1, 1);
  out(0, 0) = loss * inv;
  const int il = logits.id();
  return logits.graph().record(std::move(out), {logits}, [il, pairs, lse, inv](Graph<Scalar>& g, int self) {
    const Matrix<Scalar>& z = g.value(il);
    const Scalar up = g.grad(self)(0, 0) * inv;
    Matrix<Scalar> dz = Matrix<Scalar>::Zero(z.rows(), z.cols());
    for (const auto& [r, t] : pairs) {
      dz.row(r) += ((z.row(r).array() - lse(r)).exp() * up).matrix();
      dz(r, t) -= up;
    }
    g.accumulate(il, dz);
  });
}

/// Inverted dropout; the keep mask is drawn from rng.uniform().
template <typename Scalar, typename Rng>
Var<Scalar> dropout(const Var<Scalar>& x, double rate, Rng& rng) {
  if (rate <= 0.0) return x;
  const Scalar scale = Scalar(1.0 / (1.0 - rate));
  Matrix<Scalar> mask(x.rows(), x.cols());
  for (Index j = 0; j < mask.cols(); ++j) {
    for (Index i = 0; i < mask.rows(); ++i) mask(i, j) = rng.uniform() < rate ? Scalar(0) : scale;
  }
  const int ix = x.id();
  Matrix<Scalar> out = x.value().cwiseProduct(mask);
  return x.graph().record(std::move(out), {x}, [ix, mask = std::move(mask)](Graph<Scalar>& g, int self) {
    g.accumulate(ix, g.grad(self).cwiseProduct(mask));
  });
}

template <typename Scalar>
Var<Scalar> sum(const std::vector<Var<Scalar>>& terms) {
  if (terms.empty()) throw Error(Errc::InvalidArgument, "sum of nothing");
  Var<Scalar> acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + terms[i];
  return acc;
}

}  // namespace clipvl
