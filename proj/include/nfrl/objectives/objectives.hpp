// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "nfrl/flow/flow.hpp"
#include "nfrl/grad/adam.hpp"
#include "nfrl/grad/tape.hpp"
#include "nfrl/types.hpp"

namespace nfrl {

/// Maximum-likelihood batch. Noise N(0, noise_std^2 I) is redrawn on every
/// call to mle_loss.
struct MleBatch {
  Mat x;
  CondBatch ctx;
  double noise_std = 0.0;
};

/// Unnormalised target density for variational inference. eval fills the
/// per-row log p~(x) (B) and its input-gradient (B x d).
struct ViTarget {
  int dim = 2;
  std::function<void(const Mat& x, Vec& log_p, Mat& grad)> eval;
};

/// -mean_b log p(x_b + sigma eps_b | ctx_b). Returns the 1 x 1 loss node.
/// Throws NumericError("row <i>") when a row's log-density is not finite.
Var mle_loss(const FlowModel& model, const MleBatch& batch, Tape& tape, Rng& rng);

/// Reparameterised reverse-KL objective: z ~ N(0, I), x = f^{-1}(z),
/// loss = -mean[log p~(x) - log p0(z) + log|dx/dz|].
Var vi_loss(const FlowModel& model, const ViTarget& target, int batch_size, Tape& tape, Rng& rng,
            const CondBatch* ctx = nullptr);

/// One optimizer step on mle_loss / vi_loss. Return the loss before the step.
double mle_update(FlowModel& model, Adam& opt, const MleBatch& batch, Rng& rng);
double vi_update(FlowModel& model, Adam& opt, const ViTarget& target, int batch_size, Rng& rng);

/// y = sample(ctx); returns y + sigma^2 * grad_y log p(y | ctx).
Mat denoised_sample(const FlowModel& model, const CondBatch& ctx, Rng& rng, double sigma);
/// Same, from given prior draws (so raw and denoised paths can share z).
Mat denoised_from_prior_draws(const FlowModel& model, const Mat& z, const CondBatch& ctx,
                              double sigma);

/// Sets each row's mask bit independently with probability mask_prob.
/// Rows that were already masked stay masked.
CondBatch& apply_mask(CondBatch& ctx, double mask_prob, Rng& rng);

}  // namespace nfrl
