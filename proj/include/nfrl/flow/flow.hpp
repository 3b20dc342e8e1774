// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nfrl/grad/mlp.hpp"
#include "nfrl/grad/param_store.hpp"
#include "nfrl/grad/tape.hpp"
#include "nfrl/kv.hpp"
#include "nfrl/types.hpp"

namespace nfrl {

/// Which half of the input passes through a coupling block unchanged.
/// low_first: the first floor(d/2) coordinates condition the rest.
/// high_first: the last floor(d/2) coordinates condition the rest.
enum class SplitParity { low_first, high_first };

/// Conditioning for one row. A masked context feeds zeros plus flag 1 to
/// the encoder, which turns the model into the marginal density.
struct ConditionContext {
  Vec raw;
  bool mask_bit = false;
};

/// Batched ConditionContext: raw is B x cond_dim (B x 0 when unconditional).
struct CondBatch {
  Mat raw;
  std::vector<std::uint8_t> mask;

  static CondBatch none(Eigen::Index rows) { return {Mat(rows, 0), std::vector<std::uint8_t>(rows, 0)}; }
  static CondBatch from(Mat raw) {
    const auto rows = raw.rows();
    return {std::move(raw), std::vector<std::uint8_t>(static_cast<std::size_t>(rows), 0)};
  }
  static CondBatch repeat(const ConditionContext& ctx, Eigen::Index rows);
  Eigen::Index rows() const noexcept { return raw.rows(); }
};

struct FlowSpec {
  int dim = 2;             ///< event dimension d
  int cond_dim = 0;        ///< raw conditioner width; 0 means unconditional
  int rep_dim = 16;        ///< encoder output width k
  int blocks = 4;          ///< number of (coupling, linear) pairs
  int channels = 64;       ///< coupling MLP hidden width
  int coupling_layers = 2; ///< hidden layers per coupling MLP
  int encoder_layers = 2;  ///< hidden layers of the conditioner encoder
  int encoder_width = 64;
  Activation activation = Activation::gelu;
  bool layernorm = true;
  bool permute = true;     ///< false: every P is the identity
  std::uint64_t seed = 0;

  void validate() const;
  /// Architecture descriptor written next to checkpoints.
  KeyValues to_kv() const;
  static FlowSpec from_kv(const KeyValues& kv);
};

/// Affine coupling: x2' = (x2 + a(x1, y)) * exp(-s(x1, y)), s clamped to
/// [-kLogScaleClamp, kLogScaleClamp]. Log-det is -sum(s).
class CouplingBlock {
 public:
  static constexpr double kLogScaleClamp = 7.0;

  CouplingBlock() = default;
  CouplingBlock(int dim, int rep_dim, const FlowSpec& spec, SplitParity parity, ParamStore& store,
                const std::string& prefix);

  void init(ParamStore& store, Rng& rng) const;

  /// x: B x d, enc: B x k (invalid Var when unconditional). log_det: B x 1.
  Var forward(Tape& tape, const ParamStore& store, Var x, Var enc, Var* log_det) const;
  /// Inverse map; log_det receives log|dx/dx_tilde| = +sum(s).
  Var inverse(Tape& tape, const ParamStore& store, Var x_tilde, Var enc, Var* log_det) const;

  SplitParity parity() const noexcept { return parity_; }
  int passthrough_dim() const noexcept { return dim_ / 2; }
  int transformed_dim() const noexcept { return dim_ - dim_ / 2; }
  const Mlp& shift_net() const noexcept { return a_net_; }
  const Mlp& log_scale_net() const noexcept { return s_net_; }

 private:
  Eigen::Index pass_begin() const;
  Eigen::Index trans_begin() const;
  Var conditioner_input(Tape& tape, Var x1, Var enc) const;
  Var join(Tape& tape, Var x1, Var x2) const;

  int dim_ = 0;
  SplitParity parity_ = SplitParity::low_first;
  Mlp a_net_;
  Mlp s_net_;
};

/// x -> W x with W = P L U, P a frozen permutation, L unit lower
/// triangular, U upper triangular. Applied in factored form.
class LinearFlow {
 public:
  static constexpr double kSingularTol = 1e-12;

  LinearFlow() = default;
  LinearFlow(int dim, std::vector<int> perm, ParamStore& store, const std::string& prefix);

  /// L = U = I.
  void init(ParamStore& store) const;

  Var forward(Tape& tape, const ParamStore& store, Var x, Var* log_det) const;
  /// log_det receives log|det W^{-1}|.
  Var inverse(Tape& tape, const ParamStore& store, Var z, Var* log_det) const;

  /// sum log|diag(U)|; throws SingularityError on a near-zero pivot.
  double log_abs_det(const ParamStore& store) const;
  /// Dense P, L, U (tests and oracles only).
  Mat dense_p() const;
  Mat dense_l(const ParamStore& store) const;
  Mat dense_u(const ParamStore& store) const;

  const std::vector<int>& perm() const noexcept { return perm_; }
  int dim() const noexcept { return dim_; }
  std::size_t lower_offset() const noexcept { return l_off_; }
  std::size_t upper_offset() const noexcept { return u_off_; }
  std::size_t diag_offset() const noexcept { return diag_off_; }

 private:
  void check_pivots(const ParamStore& store) const;
  Var u_matrix(Tape& tape, const ParamStore& store) const;
  Var diag(Tape& tape, const ParamStore& store) const;

  int dim_ = 0;
  std::vector<int> perm_;      ///< out[i] = in[perm[i]]
  std::vector<int> inv_perm_;
  std::size_t l_off_ = 0, u_off_ = 0, diag_off_ = 0;
};

/// Stack of coupling + linear-flow blocks over a standard-normal prior,
/// with an optional conditioner encoder.
class FlowModel {
 public:
  FlowModel() = default;
  explicit FlowModel(const FlowSpec& spec);

  const FlowSpec& spec() const noexcept { return spec_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }
  /// Replaces parameters (e.g. from a checkpoint); layout must match.
  void set_params(ParamStore params);

  int dim() const noexcept { return spec_.dim; }
  int cond_dim() const noexcept { return spec_.cond_dim; }
  bool conditional() const noexcept { return spec_.cond_dim > 0; }
  int num_blocks() const noexcept { return static_cast<int>(couplings_.size()); }
  const CouplingBlock& coupling(int t) const { return couplings_.at(static_cast<std::size_t>(t)); }
  const LinearFlow& linear(int t) const { return linears_.at(static_cast<std::size_t>(t)); }
  const Mlp& encoder() const noexcept { return encoder_; }

  // ---- tape-level API ----

  /// Encoder output for the batch (invalid Var for unconditional models).
  /// raw is B x cond_dim; masked rows see zeros plus flag 1.
  Var encode(Tape& tape, Var raw, std::span<const std::uint8_t> mask) const;
  Var encode(Tape& tape, const CondBatch& ctx) const;

  /// x -> z through every block; log_det: B x 1 sum of forward log-dets.
  Var forward(Tape& tape, Var x, Var enc, Var* log_det) const;
  /// z -> x through the reversed chain; log_det: B x 1 log|dx/dz|.
  Var inverse(Tape& tape, Var z, Var enc, Var* log_det) const;

  /// B x 1 log p(x | ctx).
  Var log_prob(Tape& tape, Var x, Var enc) const;
  /// x = f^{-1}(z); log_prob receives the density of x (B x 1).
  Var sample(Tape& tape, Var z, Var enc, Var* log_prob) const;

  // ---- value-level convenience ----

  double log_prob(const Vec& x, const ConditionContext& ctx) const;
  Vec log_prob(const Mat& x, const CondBatch& ctx) const;
  /// One draw and its log-density.
  std::pair<Vec, double> sample(const ConditionContext& ctx, Rng& rng) const;
  /// B draws (B = ctx.rows()); fills log_probs when non-null.
  Mat sample(const CondBatch& ctx, Rng& rng, Vec* log_probs = nullptr) const;
  /// Applies the inverse chain to prior draws z (B x d).
  Mat sample_from_prior_draws(const Mat& z, const CondBatch& ctx, Vec* log_probs = nullptr) const;
  /// Row-wise grad_x log p(x | ctx).
  Mat score(const Mat& x, const CondBatch& ctx) const;
  Vec score(const Vec& x, const ConditionContext& ctx) const;

 private:
  FlowSpec spec_;
  ParamStore params_;
  std::vector<CouplingBlock> couplings_;
  std::vector<LinearFlow> linears_;
  Mlp encoder_;
};

/// log N(z; 0, I) per row.
Var standard_normal_log_prob(Tape& tape, Var z);
double standard_normal_log_prob(const Vec& z);

/// Deterministic Fisher-Yates permutation of 0..n-1.
std::vector<int> seeded_permutation(int n, std::uint64_t seed);
/// Seed used to draw block t's permutation.
std::uint64_t permutation_seed(std::uint64_t model_seed, int block);

}  // namespace nfrl
