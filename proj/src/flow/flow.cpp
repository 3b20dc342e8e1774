// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/flow/flow.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "nfrl/errors.hpp"

namespace nfrl {
namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

SplitParity parity_for_block(int t) {
  return t % 2 == 0 ? SplitParity::low_first : SplitParity::high_first;
}

void require_finite(const Tape& tape, Var v, const std::string& where) {
  if (!tape.value(v).allFinite()) throw NumericError(where, "non-finite intermediate");
}

}  // namespace

// ------------------------------------------------------------------ spec

void FlowSpec::validate() const {
  if (dim < 2) throw ConfigError("flow dim must be >= 2 (got " + std::to_string(dim) + ")");
  if (cond_dim < 0) throw ConfigError("flow cond_dim must be >= 0");
  if (cond_dim > 0 && rep_dim < 1) throw ConfigError("flow rep_dim must be >= 1");
  if (blocks < 1) throw ConfigError("flow blocks must be >= 1");
  if (channels < 1 || coupling_layers < 0) throw ConfigError("bad coupling network shape");
  if (cond_dim > 0 && (encoder_width < 1 || encoder_layers < 0)) {
    throw ConfigError("bad encoder network shape");
  }
}

KeyValues FlowSpec::to_kv() const {
  KeyValues kv;
  kv.set("T", blocks);
  kv.set("d", dim);
  kv.set("k", cond_dim > 0 ? rep_dim : 0);
  kv.set("cond_dim", cond_dim);
  kv.set("rep_dim", rep_dim);
  kv.set("channels", channels);
  kv.set("coupling_layers", coupling_layers);
  kv.set("encoder_layers", encoder_layers);
  kv.set("encoder_width", encoder_width);
  kv.set("activation", std::string(to_string(activation)));
  kv.set("layernorm", layernorm);
  kv.set("permute", permute);
  kv.set("seed", static_cast<long long>(seed));
  std::ostringstream parity, seeds;
  for (int t = 0; t < blocks; ++t) {
    if (t) {
      parity << ',';
      seeds << ',';
    }
    parity << (parity_for_block(t) == SplitParity::low_first ? "low" : "high");
    seeds << permutation_seed(seed, t);
  }
  kv.set("parity", parity.str());
  kv.set("perm_seeds", seeds.str());
  return kv;
}

FlowSpec FlowSpec::from_kv(const KeyValues& kv) {
  FlowSpec s;
  s.blocks = static_cast<int>(kv.get_int("T"));
  s.dim = static_cast<int>(kv.get_int("d"));
  s.cond_dim = static_cast<int>(kv.get_int("cond_dim"));
  s.rep_dim = static_cast<int>(kv.get_int("rep_dim"));
  s.channels = static_cast<int>(kv.get_int("channels"));
  s.coupling_layers = static_cast<int>(kv.get_int("coupling_layers"));
  s.encoder_layers = static_cast<int>(kv.get_int("encoder_layers"));
  s.encoder_width = static_cast<int>(kv.get_int("encoder_width"));
  s.activation = parse_activation(kv.get("activation"));
  s.layernorm = kv.get_bool("layernorm");
  s.permute = kv.get_bool("permute");
  s.seed = static_cast<std::uint64_t>(kv.get_int("seed"));
  s.validate();
  return s;
}

CondBatch CondBatch::repeat(const ConditionContext& ctx, Eigen::Index rows) {
  CondBatch b;
  b.raw = ctx.raw.transpose().replicate(rows, 1);
  b.mask.assign(static_cast<std::size_t>(rows), ctx.mask_bit ? 1 : 0);
  return b;
}

std::vector<int> seeded_permutation(int n, std::uint64_t seed) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
  }
  return p;
}

std::uint64_t permutation_seed(std::uint64_t model_seed, int block) {
  // splitmix64 of (seed, block)
  std::uint64_t z = model_seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(block + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return (z ^ (z >> 31)) & 0x7FFFFFFFFFFFFFFFULL;
}

// -------------------------------------------------------------- coupling

CouplingBlock::CouplingBlock(int dim, int rep_dim, const FlowSpec& spec, SplitParity parity,
                             ParamStore& store, const std::string& prefix)
    : dim_(dim), parity_(parity) {
  if (dim < 2) throw ConfigError("coupling block needs d >= 2");
  MlpSpec net;
  net.in_dim = dim / 2 + rep_dim;
  net.hidden_dims.assign(static_cast<std::size_t>(spec.coupling_layers), spec.channels);
  net.out_dim = dim - dim / 2;
  net.layernorm = spec.layernorm;
  net.activation = spec.activation;
  a_net_ = Mlp(net, store, prefix + ".a");
  s_net_ = Mlp(net, store, prefix + ".s");
}

void CouplingBlock::init(ParamStore& store, Rng& rng) const {
  a_net_.init(store, rng, /*zero_output=*/true);
  s_net_.init(store, rng, /*zero_output=*/true);
}

Eigen::Index CouplingBlock::pass_begin() const {
  return parity_ == SplitParity::low_first ? 0 : dim_ - dim_ / 2;
}

Eigen::Index CouplingBlock::trans_begin() const {
  return parity_ == SplitParity::low_first ? dim_ / 2 : 0;
}

Var CouplingBlock::conditioner_input(Tape& tape, Var x1, Var enc) const {
  return enc.valid() ? tape.concat_cols(x1, enc) : x1;
}

Var CouplingBlock::join(Tape& tape, Var x1, Var x2) const {
  return parity_ == SplitParity::low_first ? tape.concat_cols(x1, x2) : tape.concat_cols(x2, x1);
}

Var CouplingBlock::forward(Tape& tape, const ParamStore& store, Var x, Var enc,
                           Var* log_det) const {
  if (tape.value(x).cols() != dim_) throw ContractError("coupling: input width mismatch");
  Var x1 = tape.slice_cols(x, pass_begin(), dim_ / 2);
  Var x2 = tape.slice_cols(x, trans_begin(), dim_ - dim_ / 2);
  Var h = conditioner_input(tape, x1, enc);
  Var a = a_net_.forward(tape, store, h);
  Var s = tape.clamp(s_net_.forward(tape, store, h), -kLogScaleClamp, kLogScaleClamp);
  Var y2 = tape.mul(tape.add(x2, a), tape.exp(tape.neg(s)));
  if (log_det) *log_det = tape.neg(tape.sum_cols(s));
  return join(tape, x1, y2);
}

Var CouplingBlock::inverse(Tape& tape, const ParamStore& store, Var x_tilde, Var enc,
                           Var* log_det) const {
  if (tape.value(x_tilde).cols() != dim_) throw ContractError("coupling: input width mismatch");
  Var x1 = tape.slice_cols(x_tilde, pass_begin(), dim_ / 2);
  Var y2 = tape.slice_cols(x_tilde, trans_begin(), dim_ - dim_ / 2);
  Var h = conditioner_input(tape, x1, enc);
  Var a = a_net_.forward(tape, store, h);
  Var s = tape.clamp(s_net_.forward(tape, store, h), -kLogScaleClamp, kLogScaleClamp);
  Var x2 = tape.sub(tape.mul(y2, tape.exp(s)), a);
  if (log_det) *log_det = tape.sum_cols(s);
  return join(tape, x1, x2);
}

// ---------------------------------------------------------------- linear

LinearFlow::LinearFlow(int dim, std::vector<int> perm, ParamStore& store,
                       const std::string& prefix)
    : dim_(dim), perm_(std::move(perm)), inv_perm_(perm_.size()) {
  if (static_cast<int>(perm_.size()) != dim) throw ContractError("linear flow: permutation size");
  for (std::size_t i = 0; i < perm_.size(); ++i) inv_perm_[static_cast<std::size_t>(perm_[i])] = static_cast<int>(i);
  const auto m = static_cast<std::size_t>(dim) * (dim - 1) / 2;
  l_off_ = store.add(prefix + ".L", m).offset;
  u_off_ = store.add(prefix + ".U", m).offset;
  diag_off_ = store.add(prefix + ".U_diag", static_cast<std::size_t>(dim)).offset;
}

void LinearFlow::init(ParamStore& store) const {
  auto& v = store.values();
  const auto m = static_cast<std::size_t>(dim_) * (dim_ - 1) / 2;
  for (std::size_t i = 0; i < m; ++i) {
    v[l_off_ + i] = 0.0;
    v[u_off_ + i] = 0.0;
  }
  for (int i = 0; i < dim_; ++i) v[diag_off_ + static_cast<std::size_t>(i)] = 1.0;
}

void LinearFlow::check_pivots(const ParamStore& store) const {
  for (int i = 0; i < dim_; ++i) {
    if (!(std::abs(store.values()[diag_off_ + static_cast<std::size_t>(i)]) >= kSingularTol)) {
      throw SingularityError(static_cast<std::size_t>(i));
    }
  }
}

double LinearFlow::log_abs_det(const ParamStore& store) const {
  check_pivots(store);
  double s = 0.0;
  for (int i = 0; i < dim_; ++i) s += std::log(std::abs(store.values()[diag_off_ + static_cast<std::size_t>(i)]));
  return s;
}

Var LinearFlow::diag(Tape& tape, const ParamStore& store) const {
  return tape.param(store, diag_off_, 1, dim_);
}

Var LinearFlow::u_matrix(Tape& tape, const ParamStore& store) const {
  const auto m = static_cast<Eigen::Index>(dim_) * (dim_ - 1) / 2;
  Var strict = tape.scatter_tri(tape.param(store, u_off_, 1, m), dim_, /*lower=*/false);
  return tape.add(strict, tape.diag_embed(diag(tape, store)));
}

Var LinearFlow::forward(Tape& tape, const ParamStore& store, Var x, Var* log_det) const {
  check_pivots(store);
  if (tape.value(x).cols() != dim_) throw ContractError("linear flow: input width mismatch");
  const auto m = static_cast<Eigen::Index>(dim_) * (dim_ - 1) / 2;
  Var l_strict = tape.scatter_tri(tape.param(store, l_off_, 1, m), dim_, /*lower=*/true);
  Var l_full = tape.add(l_strict, tape.constant(Mat::Identity(dim_, dim_)));
  Var y = tape.matmul_nt(x, u_matrix(tape, store));
  y = tape.matmul_nt(y, l_full);
  y = tape.permute_cols(y, perm_);
  if (log_det) {
    const auto rows = tape.value(x).rows();
    *log_det = tape.broadcast_rows(tape.sum_cols(tape.log_abs(diag(tape, store))), rows);
  }
  return y;
}

Var LinearFlow::inverse(Tape& tape, const ParamStore& store, Var z, Var* log_det) const {
  check_pivots(store);
  if (tape.value(z).cols() != dim_) throw ContractError("linear flow: input width mismatch");
  const auto m = static_cast<Eigen::Index>(dim_) * (dim_ - 1) / 2;
  Var w = tape.permute_cols(z, inv_perm_);
  Var l_strict = tape.scatter_tri(tape.param(store, l_off_, 1, m), dim_, /*lower=*/true);
  w = tape.tri_solve(l_strict, w, /*lower=*/true, /*unit_diag=*/true);
  w = tape.tri_solve(u_matrix(tape, store), w, /*lower=*/false, /*unit_diag=*/false);
  if (log_det) {
    const auto rows = tape.value(z).rows();
    *log_det = tape.neg(tape.broadcast_rows(tape.sum_cols(tape.log_abs(diag(tape, store))), rows));
  }
  return w;
}

Mat LinearFlow::dense_p() const {
  Mat p = Mat::Zero(dim_, dim_);
  for (int i = 0; i < dim_; ++i) p(i, perm_[static_cast<std::size_t>(i)]) = 1.0;
  return p;
}

Mat LinearFlow::dense_l(const ParamStore& store) const {
  Mat l = Mat::Identity(dim_, dim_);
  std::size_t k = 0;
  for (int i = 0; i < dim_; ++i) {
    for (int j = 0; j < i; ++j) l(i, j) = store.values()[l_off_ + k++];
  }
  return l;
}

Mat LinearFlow::dense_u(const ParamStore& store) const {
  Mat u = Mat::Zero(dim_, dim_);
  std::size_t k = 0;
  for (int i = 0; i < dim_; ++i) {
    u(i, i) = store.values()[diag_off_ + static_cast<std::size_t>(i)];
    for (int j = i + 1; j < dim_; ++j) u(i, j) = store.values()[u_off_ + k++];
  }
  return u;
}

// ----------------------------------------------------------------- model

FlowModel::FlowModel(const FlowSpec& spec) : spec_(spec), params_(spec.seed) {
  spec_.validate();
  const int k = conditional() ? spec_.rep_dim : 0;
  if (conditional()) {
    MlpSpec enc;
    enc.in_dim = spec_.cond_dim + 1;  // + mask flag
    enc.hidden_dims.assign(static_cast<std::size_t>(spec_.encoder_layers), spec_.encoder_width);
    enc.out_dim = spec_.rep_dim;
    enc.layernorm = spec_.layernorm;
    enc.activation = spec_.activation;
    encoder_ = Mlp(enc, params_, "encoder");
  }
  for (int t = 0; t < spec_.blocks; ++t) {
    const std::string tag = "block" + std::to_string(t);
    couplings_.emplace_back(spec_.dim, k, spec_, parity_for_block(t), params_, tag + ".coupling");
    std::vector<int> perm(static_cast<std::size_t>(spec_.dim));
    if (spec_.permute) {
      perm = seeded_permutation(spec_.dim, permutation_seed(spec_.seed, t));
    } else {
      for (int i = 0; i < spec_.dim; ++i) perm[static_cast<std::size_t>(i)] = i;
    }
    linears_.emplace_back(spec_.dim, std::move(perm), params_, tag + ".linear");
  }
  Rng rng(spec_.seed);
  if (conditional()) encoder_.init(params_, rng, /*zero_output=*/false);
  for (int t = 0; t < spec_.blocks; ++t) {
    couplings_[static_cast<std::size_t>(t)].init(params_, rng);
    linears_[static_cast<std::size_t>(t)].init(params_);
  }
}

void FlowModel::set_params(ParamStore params) {
  if (!params.same_layout(params_)) {
    throw ContractError("parameter layout does not match the model architecture");
  }
  params_ = std::move(params);
}

Var FlowModel::encode(Tape& tape, Var raw, std::span<const std::uint8_t> mask) const {
  if (!conditional()) return Var{};
  const Mat& r = tape.value(raw);
  if (r.cols() != spec_.cond_dim) {
    throw ContractError("condition width " + std::to_string(r.cols()) + " != " +
                        std::to_string(spec_.cond_dim));
  }
  if (static_cast<Eigen::Index>(mask.size()) != r.rows()) {
    throw ContractError("mask length does not match condition batch");
  }
  Mat keep(r.rows(), 1), flag(r.rows(), 1);
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const bool masked = mask[static_cast<std::size_t>(i)] != 0;
    keep(i, 0) = masked ? 0.0 : 1.0;
    flag(i, 0) = masked ? 1.0 : 0.0;
  }
  Var in = tape.concat_cols(tape.mul_col(raw, tape.constant(std::move(keep))),
                            tape.constant(std::move(flag)));
  return encoder_.forward(tape, params_, in);
}

Var FlowModel::encode(Tape& tape, const CondBatch& ctx) const {
  if (!conditional()) return Var{};
  return encode(tape, tape.constant(ctx.raw), ctx.mask);
}

Var FlowModel::forward(Tape& tape, Var x, Var enc, Var* log_det) const {
  if (tape.value(x).cols() != spec_.dim) {
    throw ContractError("flow input width " + std::to_string(tape.value(x).cols()) + " != " +
                        std::to_string(spec_.dim));
  }
  Var h = x;
  Var total;
  for (int t = 0; t < num_blocks(); ++t) {
    Var ld_c, ld_l;
    h = couplings_[static_cast<std::size_t>(t)].forward(tape, params_, h, enc, &ld_c);
    h = linears_[static_cast<std::size_t>(t)].forward(tape, params_, h, &ld_l);
    require_finite(tape, h, "block " + std::to_string(t));
    Var ld = tape.add(ld_c, ld_l);
    total = total.valid() ? tape.add(total, ld) : ld;
  }
  if (log_det) *log_det = total;
  return h;
}

Var FlowModel::inverse(Tape& tape, Var z, Var enc, Var* log_det) const {
  if (tape.value(z).cols() != spec_.dim) throw ContractError("flow inverse: width mismatch");
  Var h = z;
  Var total;
  for (int t = num_blocks() - 1; t >= 0; --t) {
    Var ld_l, ld_c;
    h = linears_[static_cast<std::size_t>(t)].inverse(tape, params_, h, &ld_l);
    h = couplings_[static_cast<std::size_t>(t)].inverse(tape, params_, h, enc, &ld_c);
    require_finite(tape, h, "block " + std::to_string(t));
    Var ld = tape.add(ld_l, ld_c);
    total = total.valid() ? tape.add(total, ld) : ld;
  }
  if (log_det) *log_det = total;
  return h;
}

Var standard_normal_log_prob(Tape& tape, Var z) {
  const double d = static_cast<double>(tape.value(z).cols());
  return tape.add_scalar(tape.scale(tape.sum_cols(tape.square(z)), -0.5), -0.5 * d * kLog2Pi);
}

double standard_normal_log_prob(const Vec& z) {
  return -0.5 * z.squaredNorm() - 0.5 * static_cast<double>(z.size()) * kLog2Pi;
}

Var FlowModel::log_prob(Tape& tape, Var x, Var enc) const {
  Var ld;
  Var z = forward(tape, x, enc, &ld);
  return tape.add(standard_normal_log_prob(tape, z), ld);
}

Var FlowModel::sample(Tape& tape, Var z, Var enc, Var* log_prob) const {
  Var ld;
  Var x = inverse(tape, z, enc, &ld);
  if (log_prob) *log_prob = tape.sub(standard_normal_log_prob(tape, z), ld);
  return x;
}

double FlowModel::log_prob(const Vec& x, const ConditionContext& ctx) const {
  Mat xm = x.transpose();
  return log_prob(xm, CondBatch::repeat(ctx, 1))(0);
}

Vec FlowModel::log_prob(const Mat& x, const CondBatch& ctx) const {
  Tape tape;
  tape.freeze(params_);
  Var lp = log_prob(tape, tape.constant(x), encode(tape, ctx));
  return tape.value(lp).col(0);
}

std::pair<Vec, double> FlowModel::sample(const ConditionContext& ctx, Rng& rng) const {
  Vec lp;
  Mat x = sample(CondBatch::repeat(ctx, 1), rng, &lp);
  return {x.row(0).transpose(), lp(0)};
}

Mat FlowModel::sample(const CondBatch& ctx, Rng& rng, Vec* log_probs) const {
  return sample_from_prior_draws(randn(ctx.rows(), spec_.dim, rng), ctx, log_probs);
}

Mat FlowModel::sample_from_prior_draws(const Mat& z, const CondBatch& ctx, Vec* log_probs) const {
  Tape tape;
  tape.freeze(params_);
  Var lp;
  Var x = sample(tape, tape.constant(z), encode(tape, ctx), log_probs ? &lp : nullptr);
  if (log_probs) *log_probs = tape.value(lp).col(0);
  return tape.value(x);
}

Mat FlowModel::score(const Mat& x, const CondBatch& ctx) const {
  Tape tape;
  tape.freeze(params_);
  Var in = tape.input(x);
  Var lp = log_prob(tape, in, encode(tape, ctx));
  tape.backward(lp);
  return tape.grad(in);
}

Vec FlowModel::score(const Vec& x, const ConditionContext& ctx) const {
  Mat xm = x.transpose();
  return score(xm, CondBatch::repeat(ctx, 1)).row(0).transpose();
}

}  // namespace nfrl
