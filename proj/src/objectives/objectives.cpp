// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/objectives/objectives.hpp"

#include <cmath>
#include <string>

#include "nfrl/errors.hpp"

namespace nfrl {
namespace {

void require_finite_rows(const Mat& v, const char* what) {
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    if (!v.row(r).allFinite()) throw NumericError("row " + std::to_string(r), what);
  }
}

}  // namespace

Var mle_loss(const FlowModel& model, const MleBatch& batch, Tape& tape, Rng& rng) {
  const auto rows = batch.x.rows();
  if (rows == 0) throw ContractError("mle_loss: empty batch");
  if (batch.ctx.rows() != rows) throw ContractError("mle_loss: context batch size mismatch");
  if (batch.noise_std < 0.0) throw ContractError("mle_loss: negative noise_std");
  Mat x = batch.x;
  if (batch.noise_std > 0.0) x += batch.noise_std * randn(rows, x.cols(), rng);
  require_finite_rows(x, "non-finite input");
  Var lp = model.log_prob(tape, tape.constant(std::move(x)), model.encode(tape, batch.ctx));
  require_finite_rows(tape.value(lp), "non-finite log-likelihood");
  return tape.neg(tape.mean_all(lp));
}

Var vi_loss(const FlowModel& model, const ViTarget& target, int batch_size, Tape& tape, Rng& rng,
            const CondBatch* ctx) {
  if (batch_size < 1) throw ContractError("vi_loss: batch_size must be >= 1");
  if (target.dim != model.dim()) throw ContractError("vi_loss: target dimension mismatch");
  Var z = tape.constant(randn(batch_size, model.dim(), rng));
  Var enc = ctx ? model.encode(tape, *ctx) : model.encode(tape, CondBatch::none(batch_size));
  Var log_det;
  Var x = model.inverse(tape, z, enc, &log_det);
  Vec log_p;
  Mat grad;
  target.eval(tape.value(x), log_p, grad);
  if (!log_p.allFinite() || !grad.allFinite()) {
    for (Eigen::Index r = 0; r < log_p.size(); ++r) {
      if (!std::isfinite(log_p(r)) || !grad.row(r).allFinite()) {
        throw NumericError("row " + std::to_string(r), "target returned a non-finite value");
      }
    }
  }
  Var target_lp = tape.external_rows(x, Mat(log_p), std::move(grad));
  Var log_q = tape.sub(standard_normal_log_prob(tape, z), log_det);
  return tape.mean_all(tape.sub(log_q, target_lp));
}

double mle_update(FlowModel& model, Adam& opt, const MleBatch& batch, Rng& rng) {
  Tape tape;
  Var loss = mle_loss(model, batch, tape, rng);
  tape.backward(loss);
  opt.step(model.params(), tape.param_grad(model.params()));
  return tape.scalar_value(loss);
}

double vi_update(FlowModel& model, Adam& opt, const ViTarget& target, int batch_size, Rng& rng) {
  Tape tape;
  Var loss = vi_loss(model, target, batch_size, tape, rng);
  tape.backward(loss);
  opt.step(model.params(), tape.param_grad(model.params()));
  return tape.scalar_value(loss);
}

Mat denoised_from_prior_draws(const FlowModel& model, const Mat& z, const CondBatch& ctx,
                              double sigma) {
  const Mat y = model.sample_from_prior_draws(z, ctx);
  if (sigma == 0.0) return y;
  return y + sigma * sigma * model.score(y, ctx);
}

Mat denoised_sample(const FlowModel& model, const CondBatch& ctx, Rng& rng, double sigma) {
  return denoised_from_prior_draws(model, randn(ctx.rows(), model.dim(), rng), ctx, sigma);
}

CondBatch& apply_mask(CondBatch& ctx, double mask_prob, Rng& rng) {
  if (!(mask_prob >= 0.0 && mask_prob <= 1.0)) {
    throw ContractError("apply_mask: mask_prob must lie in [0, 1]");
  }
  if (ctx.mask.size() != static_cast<std::size_t>(ctx.rows())) {
    ctx.mask.assign(static_cast<std::size_t>(ctx.rows()), 0);
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& m : ctx.mask) {
    if (u(rng) < mask_prob) m = 1;
  }
  return ctx;
}

}  // namespace nfrl
