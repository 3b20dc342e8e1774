// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "nfrl/grad/param_store.hpp"
#include "nfrl/types.hpp"

namespace nfrl {

/// Handle to a node on a Tape.
struct Var {
  int id = -1;
  bool valid() const noexcept { return id >= 0; }
};

/// Reverse-mode differentiation over batch-major matrices.
///
/// Every op appends one node holding its forward value and a closure that
/// pushes the node's gradient to its inputs. Parameters enter through
/// param(), which views a range of a ParamStore; gradients for every store
/// touched are accumulated into a flat vector aligned with its values.
/// Nodes created by input() keep their gradient so callers can read
/// input-gradients (scores, dQ/da) after backward().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Var input(Mat value);
  Var constant(Mat value);
  Var scalar(double v);
  /// rows x cols view of store.values()[offset, offset + rows*cols).
  Var param(const ParamStore& store, std::size_t offset, Eigen::Index rows, Eigen::Index cols);
  /// Parameters of a frozen store enter as constants.
  void freeze(const ParamStore& store);

  // Linear algebra.
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  ///< a * b^T
  Var affine(Var x, Var w, Var b);  ///< x * w^T + b, with b a 1 x out row
  /// Row-wise solve: y_r = T^{-1} x_r for triangular T (d x d).
  Var tri_solve(Var t, Var x, bool lower, bool unit_diag);
  /// 1 x m vector of strictly-triangular entries -> d x d matrix (row-major order).
  Var scatter_tri(Var v, Eigen::Index d, bool lower);
  Var diag_embed(Var v);

  // Elementwise.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var minimum(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var neg(Var a) { return scale(a, -1.0); }
  Var exp(Var a);
  Var log_abs(Var a);
  Var square(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var gelu(Var a);
  /// Hard clamp; gradient is zero where the input lies outside [lo, hi].
  Var clamp(Var a, double lo, double hi);

  // Broadcasting.
  Var add_row(Var x, Var row);  ///< x + 1 x n row
  Var mul_row(Var x, Var row);
  Var mul_col(Var x, Var col);  ///< x * B x 1 column
  Var broadcast_rows(Var row, Eigen::Index rows);

  // Shape.
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var x, Eigen::Index begin, Eigen::Index count);
  /// out[:, i] = x[:, perm[i]].
  Var permute_cols(Var x, std::span<const int> perm);
  Var stop_gradient(Var x);

  /// Row-wise scalar function evaluated outside the tape: value is B x 1,
  /// input_grad (B x n) holds d value_r / d x_r for each row.
  Var external_rows(Var x, Mat value, Mat input_grad);

  // Reductions.
  Var sum_cols(Var x);  ///< B x n -> B x 1
  Var sum_all(Var x);   ///< -> 1 x 1
  Var mean_all(Var x);  ///< -> 1 x 1
  /// Per-row normalisation to zero mean, unit variance (no affine).
  Var layer_norm(Var x, double eps);

  const Mat& value(Var v) const;
  double scalar_value(Var v) const;

  /// Seeds d(out) = seed and propagates to every node that needs a gradient.
  void backward(Var out, const Mat& seed);
  /// backward() with a seed of ones; `out` is usually a 1 x 1 loss.
  void backward(Var out);

  /// Gradient of the last backward() w.r.t. v. Zero-shaped if v was unreached.
  Mat grad(Var v) const;
  /// Flat gradient aligned with store.values(); zeros for untouched entries.
  std::vector<double> param_grad(const ParamStore& store) const;

  std::size_t size() const noexcept { return nodes_.size(); }
  bool has_backward() const noexcept { return backward_done_; }

 private:
  struct Node {
    Mat value;
    bool needs_grad = false;
    std::function<void(Tape&, const Mat&)> back;
  };
  struct StoreGrad {
    const ParamStore* store;
    std::vector<double> grad;
  };

  Var push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> back);
  const Node& node(Var v) const;
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].needs_grad; }
  void accumulate(Var v, const Mat& g);
  std::vector<double>& store_grad(const ParamStore& store);
  bool frozen(const ParamStore& store) const;

  std::vector<Node> nodes_;
  std::vector<Mat> grads_;
  std::vector<StoreGrad> store_grads_;
  std::vector<const ParamStore*> frozen_;
  bool backward_done_ = false;
};

}  // namespace nfrl
