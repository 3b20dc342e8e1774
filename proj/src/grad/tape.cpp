// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/grad/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "nfrl/errors.hpp"

namespace nfrl {
namespace {

std::string shape(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string(op) + ": shape mismatch " + shape(a) + " vs " + shape(b));
  }
}

// Column-major temporaries from triangular solves are converted back here.
Mat to_rowmajor(const Eigen::MatrixXd& m) { return Mat(m); }

}  // namespace

Var Tape::push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> back) {
  nodes_.push_back(Node{std::move(value), needs_grad, needs_grad ? std::move(back) : nullptr});
  backward_done_ = false;
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw StateError("variable does not belong to this tape");
  }
  return nodes_[static_cast<std::size_t>(v.id)];
}

const Mat& Tape::value(Var v) const { return node(v).value; }

double Tape::scalar_value(Var v) const {
  const Mat& m = value(v);
  if (m.size() != 1) throw ContractError("scalar_value on " + shape(m) + " node");
  return m(0, 0);
}

void Tape::accumulate(Var v, const Mat& g) {
  if (!needs(v)) return;
  Mat& slot = grads_[static_cast<std::size_t>(v.id)];
  if (slot.size() == 0) {
    slot = g;
  } else {
    slot += g;
  }
}

std::vector<double>& Tape::store_grad(const ParamStore& store) {
  for (auto& sg : store_grads_) {
    if (sg.store == &store) return sg.grad;
  }
  store_grads_.push_back(StoreGrad{&store, std::vector<double>(store.size(), 0.0)});
  return store_grads_.back().grad;
}

bool Tape::frozen(const ParamStore& store) const {
  return std::find(frozen_.begin(), frozen_.end(), &store) != frozen_.end();
}

void Tape::freeze(const ParamStore& store) {
  if (!frozen(store)) frozen_.push_back(&store);
}

// ---------------------------------------------------------------- leaves

Var Tape::input(Mat value) {
  return push(std::move(value), true, [](Tape&, const Mat&) {});
}

Var Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

Var Tape::scalar(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

Var Tape::param(const ParamStore& store, std::size_t offset, Eigen::Index rows,
                Eigen::Index cols) {
  const auto n = static_cast<std::size_t>(rows * cols);
  if (offset + n > store.size()) {
    throw ContractError("param view [" + std::to_string(offset) + ", " +
                        std::to_string(offset + n) + ") exceeds store of size " +
                        std::to_string(store.size()));
  }
  Mat value = Eigen::Map<const Mat>(store.values().data() + offset, rows, cols);
  if (frozen(store)) return constant(std::move(value));
  const ParamStore* sp = &store;
  return push(std::move(value), true, [sp, offset, n](Tape& t, const Mat& g) {
    auto& flat = t.store_grad(*sp);
    for (std::size_t i = 0; i < n; ++i) flat[offset + i] += g.data()[i];
  });
}

// ---------------------------------------------------------- linear algebra

Var Tape::matmul(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols() != B.rows()) {
    throw ContractError("matmul: inner dimensions " + shape(A) + " * " + shape(B));
  }
  return push(A * B, needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    if (t.needs(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.needs(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.cols() != B.cols()) {
    throw ContractError("matmul_nt: inner dimensions " + shape(A) + " * " + shape(B) + "^T");
  }
  return push(A * B.transpose(), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    if (t.needs(a)) t.accumulate(a, g * t.value(b));
    if (t.needs(b)) t.accumulate(b, g.transpose() * t.value(a));
  });
}

Var Tape::affine(Var x, Var w, Var b) {
  const Mat& X = value(x);
  const Mat& W = value(w);
  const Mat& Bv = value(b);
  if (X.cols() != W.cols() || Bv.rows() != 1 || Bv.cols() != W.rows()) {
    throw ContractError("affine: x " + shape(X) + ", w " + shape(W) + ", b " + shape(Bv));
  }
  Mat y = X * W.transpose();
  y.rowwise() += Bv.row(0);
  return push(std::move(y), needs(x) || needs(w) || needs(b), [x, w, b](Tape& t, const Mat& g) {
    if (t.needs(x)) t.accumulate(x, g * t.value(w));
    if (t.needs(w)) t.accumulate(w, g.transpose() * t.value(x));
    if (t.needs(b)) t.accumulate(b, g.colwise().sum());
  });
}

Var Tape::tri_solve(Var tv, Var xv, bool lower, bool unit_diag) {
  const Mat& T = value(tv);
  const Mat& X = value(xv);
  if (T.rows() != T.cols() || X.cols() != T.rows()) {
    throw ContractError("tri_solve: T " + shape(T) + ", x " + shape(X));
  }
  auto solve = [lower, unit_diag](const Mat& tm, const Eigen::MatrixXd& rhs, bool transposed) {
    const Eigen::MatrixXd tc = tm;
    if (lower && unit_diag) {
      return transposed ? Eigen::MatrixXd(tc.triangularView<Eigen::UnitLower>().transpose().solve(rhs))
                        : Eigen::MatrixXd(tc.triangularView<Eigen::UnitLower>().solve(rhs));
    }
    if (lower) {
      return transposed ? Eigen::MatrixXd(tc.triangularView<Eigen::Lower>().transpose().solve(rhs))
                        : Eigen::MatrixXd(tc.triangularView<Eigen::Lower>().solve(rhs));
    }
    if (unit_diag) {
      return transposed ? Eigen::MatrixXd(tc.triangularView<Eigen::UnitUpper>().transpose().solve(rhs))
                        : Eigen::MatrixXd(tc.triangularView<Eigen::UnitUpper>().solve(rhs));
    }
    return transposed ? Eigen::MatrixXd(tc.triangularView<Eigen::Upper>().transpose().solve(rhs))
                      : Eigen::MatrixXd(tc.triangularView<Eigen::Upper>().solve(rhs));
  };
  Mat y = to_rowmajor(solve(T, X.transpose(), false).transpose());
  return push(std::move(y), needs(tv) || needs(xv),
              [tv, xv, lower, unit_diag, solve, self = Var{static_cast<int>(nodes_.size())}](
                  Tape& t, const Mat& g) {
                const Mat gx = to_rowmajor(solve(t.value(tv), g.transpose(), true).transpose());
                if (t.needs(xv)) t.accumulate(xv, gx);
                if (t.needs(tv)) {
                  Mat gt = -(gx.transpose() * t.value(self));
                  const auto d = gt.rows();
                  for (Eigen::Index i = 0; i < d; ++i) {
                    for (Eigen::Index j = 0; j < d; ++j) {
                      const bool keep = lower ? (j < i || (j == i && !unit_diag))
                                              : (j > i || (j == i && !unit_diag));
                      if (!keep) gt(i, j) = 0.0;
                    }
                  }
                  t.accumulate(tv, gt);
                }
              });
}

Var Tape::scatter_tri(Var v, Eigen::Index d, bool lower) {
  const Mat& V = value(v);
  const Eigen::Index m = d * (d - 1) / 2;
  if (V.rows() != 1 || V.cols() != m) {
    throw ContractError("scatter_tri: expected 1x" + std::to_string(m) + ", got " + shape(V));
  }
  Mat out = Mat::Zero(d, d);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      if (lower ? j < i : j > i) out(i, j) = V(0, k++);
    }
  }
  return push(std::move(out), needs(v), [v, d, lower, m](Tape& t, const Mat& g) {
    Mat gv(1, m);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        if (lower ? j < i : j > i) gv(0, k++) = g(i, j);
      }
    }
    t.accumulate(v, gv);
  });
}

Var Tape::diag_embed(Var v) {
  const Mat& V = value(v);
  if (V.rows() != 1) throw ContractError("diag_embed: expected a row, got " + shape(V));
  Mat out = Mat::Zero(V.cols(), V.cols());
  out.diagonal() = V.row(0).transpose();
  return push(std::move(out), needs(v), [v](Tape& t, const Mat& g) {
    Mat gv = g.diagonal().transpose();
    t.accumulate(v, gv);
  });
}

// ------------------------------------------------------------- elementwise

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  return push(value(a) + value(b), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  return push(value(a) - value(b), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (t.needs(b)) t.accumulate(b, -g);
  });
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  return push(value(a).cwiseProduct(value(b)), needs(a) || needs(b),
              [a, b](Tape& t, const Mat& g) {
                if (t.needs(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
                if (t.needs(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
              });
}

Var Tape::minimum(Var a, Var b) {
  require_same_shape(value(a), value(b), "minimum");
  return push(value(a).cwiseMin(value(b)), needs(a) || needs(b), [a, b](Tape& t, const Mat& g) {
    const Mat& A = t.value(a);
    const Mat& B = t.value(b);
    const Mat take_a = (A.array() <= B.array()).cast<double>().matrix();
    if (t.needs(a)) t.accumulate(a, g.cwiseProduct(take_a));
    if (t.needs(b)) t.accumulate(b, g.cwiseProduct((1.0 - take_a.array()).matrix()));
  });
}

Var Tape::scale(Var a, double c) {
  return push(value(a) * c, needs(a), [a, c](Tape& t, const Mat& g) { t.accumulate(a, g * c); });
}

Var Tape::add_scalar(Var a, double c) {
  return push((value(a).array() + c).matrix(), needs(a),
              [a](Tape& t, const Mat& g) { t.accumulate(a, g); });
}

Var Tape::exp(Var a) {
  Mat y = value(a).array().exp().matrix();
  const Var self{static_cast<int>(nodes_.size())};
  return push(std::move(y), needs(a), [a, self](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseProduct(t.value(self)));
  });
}

Var Tape::log_abs(Var a) {
  return push(value(a).array().abs().log().matrix(), needs(a), [a](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseQuotient(t.value(a)));
  });
}

Var Tape::square(Var a) {
  return push(value(a).array().square().matrix(), needs(a), [a](Tape& t, const Mat& g) {
    t.accumulate(a, (2.0 * g.array() * t.value(a).array()).matrix());
  });
}

Var Tape::tanh(Var a) {
  Mat y = value(a).array().tanh().matrix();
  const Var self{static_cast<int>(nodes_.size())};
  return push(std::move(y), needs(a), [a, self](Tape& t, const Mat& g) {
    const auto& Y = t.value(self).array();
    t.accumulate(a, (g.array() * (1.0 - Y.square())).matrix());
  });
}

Var Tape::relu(Var a) {
  return push(value(a).cwiseMax(0.0), needs(a), [a](Tape& t, const Mat& g) {
    t.accumulate(a, (g.array() * (t.value(a).array() > 0.0).cast<double>()).matrix());
  });
}

Var Tape::gelu(Var a) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  Mat y = value(a).unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); });
  return push(std::move(y), needs(a), [a](Tape& t, const Mat& g) {
    constexpr double inv_sqrt_2pi = 0.39894228040143267794;
    const Mat d = t.value(a).unaryExpr([](double x) {
      return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
    });
    t.accumulate(a, g.cwiseProduct(d));
  });
}

Var Tape::clamp(Var a, double lo, double hi) {
  return push(value(a).cwiseMax(lo).cwiseMin(hi), needs(a), [a, lo, hi](Tape& t, const Mat& g) {
    const auto& X = t.value(a).array();
    t.accumulate(a, (g.array() * ((X >= lo) && (X <= hi)).cast<double>()).matrix());
  });
}

// ------------------------------------------------------------- broadcasting

Var Tape::add_row(Var x, Var row) {
  const Mat& X = value(x);
  const Mat& R = value(row);
  if (R.rows() != 1 || R.cols() != X.cols()) {
    throw ContractError("add_row: x " + shape(X) + ", row " + shape(R));
  }
  Mat y = X;
  y.rowwise() += R.row(0);
  return push(std::move(y), needs(x) || needs(row), [x, row](Tape& t, const Mat& g) {
    t.accumulate(x, g);
    if (t.needs(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var Tape::mul_row(Var x, Var row) {
  const Mat& X = value(x);
  const Mat& R = value(row);
  if (R.rows() != 1 || R.cols() != X.cols()) {
    throw ContractError("mul_row: x " + shape(X) + ", row " + shape(R));
  }
  Mat y = X.array().rowwise() * R.row(0).array();
  return push(std::move(y), needs(x) || needs(row), [x, row](Tape& t, const Mat& g) {
    if (t.needs(x)) {
      Mat gx = g.array().rowwise() * t.value(row).row(0).array();
      t.accumulate(x, gx);
    }
    if (t.needs(row)) t.accumulate(row, g.cwiseProduct(t.value(x)).colwise().sum());
  });
}

Var Tape::mul_col(Var x, Var col) {
  const Mat& X = value(x);
  const Mat& C = value(col);
  if (C.cols() != 1 || C.rows() != X.rows()) {
    throw ContractError("mul_col: x " + shape(X) + ", col " + shape(C));
  }
  Mat y = X.array().colwise() * C.col(0).array();
  return push(std::move(y), needs(x) || needs(col), [x, col](Tape& t, const Mat& g) {
    if (t.needs(x)) {
      Mat gx = g.array().colwise() * t.value(col).col(0).array();
      t.accumulate(x, gx);
    }
    if (t.needs(col)) t.accumulate(col, g.cwiseProduct(t.value(x)).rowwise().sum());
  });
}

Var Tape::broadcast_rows(Var row, Eigen::Index rows) {
  const Mat& R = value(row);
  if (R.rows() != 1) throw ContractError("broadcast_rows: expected a row, got " + shape(R));
  Mat y = R.replicate(rows, 1);
  return push(std::move(y), needs(row),
              [row](Tape& t, const Mat& g) { t.accumulate(row, g.colwise().sum()); });
}

// ---------------------------------------------------------------- shape

Var Tape::concat_cols(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  if (A.rows() != B.rows()) throw ContractError("concat_cols: " + shape(A) + " | " + shape(B));
  Mat y(A.rows(), A.cols() + B.cols());
  y << A, B;
  const auto na = A.cols();
  const auto nb = B.cols();
  return push(std::move(y), needs(a) || needs(b), [a, b, na, nb](Tape& t, const Mat& g) {
    if (t.needs(a)) t.accumulate(a, g.leftCols(na));
    if (t.needs(b)) t.accumulate(b, g.rightCols(nb));
  });
}

Var Tape::slice_cols(Var x, Eigen::Index begin, Eigen::Index count) {
  const Mat& X = value(x);
  if (begin < 0 || count < 0 || begin + count > X.cols()) {
    throw ContractError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                        ") of " + shape(X));
  }
  const auto cols = X.cols();
  return push(X.middleCols(begin, count), needs(x), [x, begin, count, cols](Tape& t, const Mat& g) {
    Mat gx = Mat::Zero(g.rows(), cols);
    gx.middleCols(begin, count) = g;
    t.accumulate(x, gx);
  });
}

Var Tape::permute_cols(Var x, std::span<const int> perm) {
  const Mat& X = value(x);
  if (static_cast<Eigen::Index>(perm.size()) != X.cols()) {
    throw ContractError("permute_cols: permutation of size " + std::to_string(perm.size()) +
                        " for " + shape(X));
  }
  Mat y(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i) y.col(i) = X.col(perm[static_cast<std::size_t>(i)]);
  std::vector<int> p(perm.begin(), perm.end());
  return push(std::move(y), needs(x), [x, p](Tape& t, const Mat& g) {
    Mat gx(g.rows(), g.cols());
    for (std::size_t i = 0; i < p.size(); ++i) {
      gx.col(p[i]) = g.col(static_cast<Eigen::Index>(i));
    }
    t.accumulate(x, gx);
  });
}

Var Tape::stop_gradient(Var x) { return constant(value(x)); }

Var Tape::external_rows(Var x, Mat v, Mat input_grad) {
  const Mat& X = value(x);
  if (v.rows() != X.rows() || v.cols() != 1 || input_grad.rows() != X.rows() ||
      input_grad.cols() != X.cols()) {
    throw ContractError("external_rows: value " + shape(v) + ", gradient " + shape(input_grad) +
                        " for input " + shape(X));
  }
  return push(std::move(v), needs(x), [x, jg = std::move(input_grad)](Tape& t, const Mat& g) {
    Mat gx = jg.array().colwise() * g.col(0).array();
    t.accumulate(x, gx);
  });
}

// ------------------------------------------------------------- reductions

Var Tape::sum_cols(Var x) {
  const auto cols = value(x).cols();
  return push(value(x).rowwise().sum(), needs(x), [x, cols](Tape& t, const Mat& g) {
    t.accumulate(x, g.replicate(1, cols));
  });
}

Var Tape::sum_all(Var x) {
  Mat y(1, 1);
  y(0, 0) = value(x).sum();
  const auto r = value(x).rows();
  const auto c = value(x).cols();
  return push(std::move(y), needs(x), [x, r, c](Tape& t, const Mat& g) {
    t.accumulate(x, Mat::Constant(r, c, g(0, 0)));
  });
}

Var Tape::mean_all(Var x) {
  const auto n = static_cast<double>(value(x).size());
  if (n == 0) throw ContractError("mean_all of an empty node");
  return scale(sum_all(x), 1.0 / n);
}

Var Tape::layer_norm(Var x, double eps) {
  const Mat& X = value(x);
  const auto n = static_cast<double>(X.cols());
  Mat y(X.rows(), X.cols());
  Vec inv_std(X.rows());
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    const double mu = X.row(r).mean();
    const double var = (X.row(r).array() - mu).square().sum() / n;
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    y.row(r) = (X.row(r).array() - mu) * inv_std(r);
  }
  const Var self{static_cast<int>(nodes_.size())};
  return push(std::move(y), needs(x), [x, self, inv_std, n](Tape& t, const Mat& g) {
    const Mat& Y = t.value(self);
    Mat gx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double gm = g.row(r).mean();
      const double gy = g.row(r).dot(Y.row(r)) / n;
      gx.row(r) = inv_std(r) * (g.row(r).array() - gm - Y.row(r).array() * gy);
    }
    t.accumulate(x, gx);
  });
}

// ---------------------------------------------------------------- backward

void Tape::backward(Var out, const Mat& seed) {
  if (nodes_.empty()) throw StateError("backward called before any forward pass");
  const Node& o = node(out);
  require_same_shape(o.value, seed, "backward seed");
  grads_.assign(nodes_.size(), Mat());
  for (auto& sg : store_grads_) std::fill(sg.grad.begin(), sg.grad.end(), 0.0);
  backward_done_ = true;
  if (!o.needs_grad) return;
  grads_[static_cast<std::size_t>(out.id)] = seed;
  for (int i = out.id; i >= 0; --i) {
    const auto idx = static_cast<std::size_t>(i);
    if (grads_[idx].size() == 0 || !nodes_[idx].back) continue;
    nodes_[idx].back(*this, grads_[idx]);
  }
}

void Tape::backward(Var out) {
  const Mat& v = value(out);
  backward(out, Mat::Ones(v.rows(), v.cols()));
}

Mat Tape::grad(Var v) const {
  if (!backward_done_) throw StateError("grad requested before backward");
  const Node& n = node(v);
  const auto idx = static_cast<std::size_t>(v.id);
  if (idx < grads_.size() && grads_[idx].size() != 0) return grads_[idx];
  return Mat::Zero(n.value.rows(), n.value.cols());
}

std::vector<double> Tape::param_grad(const ParamStore& store) const {
  if (!backward_done_) throw StateError("param_grad requested before backward");
  for (const auto& sg : store_grads_) {
    if (sg.store == &store) return sg.grad;
  }
  return std::vector<double>(store.size(), 0.0);
}

}  // namespace nfrl
