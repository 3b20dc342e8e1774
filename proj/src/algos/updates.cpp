// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/algos/updates.hpp"

#include <iostream>

#include "nfrl/errors.hpp"

namespace nfrl {

Mat hcat(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) throw ContractError("hcat: row counts differ");
  Mat out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

TdBatch td_batch(const TransitionBatch& b) { return {b.s, b.a, b.r, b.s_next, b.done}; }

double bc_update(FlowModel& policy, Adam& opt, const Mat& s, const Mat& a, double noise_std,
                 Rng& rng) {
  return mle_update(policy, opt, MleBatch{a, CondBatch::from(s), noise_std}, rng);
}

double bc_update(FlowModel& policy, Adam& opt, const ReplayBuffer& data, int batch,
                 double noise_std, Rng& rng) {
  const TransitionBatch b = data.sample_batch(batch, rng);
  return bc_update(policy, opt, b.s, b.a, noise_std, rng);
}

double gcbc_update(FlowModel& policy, Adam& opt, const ReplayBuffer& data, int batch,
                   double gamma_fut, double noise_std, Rng& rng) {
  if (!(gamma_fut > 0.0 && gamma_fut < 1.0)) throw ConfigError("gcbc: gamma_fut must lie in (0, 1)");
  const TransitionBatch b = data.sample_batch(batch, rng, gamma_fut);
  return mle_update(policy, opt, MleBatch{b.a, CondBatch::from(hcat(b.s, b.g)), noise_std}, rng);
}

QFn critic_q(const Critic& critic) {
  return [&critic](Tape& tape, Var s, Var a) {
    tape.freeze(critic.online());
    return critic.q_min(tape, critic.online(), tape.concat_cols(s, a));
  };
}

ActorTerms actor_loss(const FlowModel& actor, const QFn& q, const Mat& s, const Mat& a,
                      const ActorLossWeights& w, Tape& tape, Rng& rng) {
  const auto n = s.rows();
  if (n == 0 || a.rows() != n) throw ContractError("actor_loss: bad batch");
  ActorTerms out;
  Var enc = actor.encode(tape, CondBatch::from(s));
  Var z = tape.constant(randn(n, actor.dim(), rng));
  Var a_pi = actor.sample(tape, z, enc, &out.log_pi_pi);
  out.q_pi = q(tape, tape.constant(s), a_pi);

  Mat a_data = a;
  if (w.bc_noise_std > 0.0) a_data += w.bc_noise_std * randn(n, a.cols(), rng);
  out.log_pi_data = actor.log_prob(tape, tape.constant(std::move(a_data)), enc);

  Var vi = tape.mean_all(tape.sub(out.q_pi, tape.scale(out.log_pi_pi, w.lambda_ent)));
  Var mle = tape.mean_all(out.log_pi_data);
  out.loss = tape.neg(tape.add(vi, tape.scale(mle, w.alpha_bc)));
  return out;
}

ActorMetrics actor_update(FlowModel& actor, Adam& opt, const QFn& q, const Mat& s, const Mat& a,
                          const ActorLossWeights& w, Rng& rng) {
  Tape tape;
  const ActorTerms t = actor_loss(actor, q, s, a, w, tape, rng);
  tape.backward(t.loss);
  opt.step(actor.params(), tape.param_grad(actor.params()));
  return {tape.scalar_value(t.loss), tape.value(t.q_pi).mean(), tape.value(t.log_pi_data).mean()};
}

ActionSampler flow_sampler(const FlowModel& actor) {
  return [&actor](const Mat& s, Rng& rng) { return actor.sample(CondBatch::from(s), rng); };
}

Var gcrl_q_loss(const UgsState& ugs, const Mat& s, const Mat& a, const Mat& g_future, Tape& tape,
                Rng& rng) {
  CondBatch ctx = CondBatch::from(hcat(s, a));
  apply_mask(ctx, ugs.cfg.mask_prob, rng);
  return mle_loss(ugs.joint, MleBatch{g_future, std::move(ctx), ugs.cfg.goal_noise_std}, tape, rng);
}

double gcrl_q_update(UgsState& ugs, Adam& opt, const Mat& s, const Mat& a, const Mat& g_future,
                     Rng& rng) {
  Tape tape;
  Var loss = gcrl_q_loss(ugs, s, a, g_future, tape, rng);
  tape.backward(loss);
  opt.step(ugs.joint.params(), tape.param_grad(ugs.joint.params()));
  return tape.scalar_value(loss);
}

double gcrl_q_update(UgsState& ugs, Adam& opt, const ReplayBuffer& buffer, int batch, Rng& rng) {
  const TransitionBatch b = buffer.sample_batch(batch, rng, ugs.cfg.gamma);
  return gcrl_q_update(ugs, opt, b.s, b.a, b.g, rng);
}

Vec marginal_log_density(const FlowModel& joint, const Mat& goals) {
  CondBatch ctx = CondBatch::from(Mat::Zero(goals.rows(), joint.cond_dim()));
  ctx.mask.assign(static_cast<std::size_t>(goals.rows()), 1);
  return joint.log_prob(goals, ctx);
}

Eigen::Index argmin_first(const Vec& v) {
  if (v.size() == 0) throw ContractError("argmin of an empty vector");
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) < v(best)) best = i;
  }
  return best;
}

GoalPick select_ugs_goal(const UgsState& ugs, const ReplayBuffer& buffer, Rng& rng,
                         const WarningSink& warn) {
  if (ugs.cfg.candidates < 1) throw ConfigError("ugs: candidates must be >= 1");
  const std::size_t stored = buffer.num_states();
  GoalPick pick;
  if (stored < static_cast<std::size_t>(ugs.cfg.candidates)) {
    const std::string msg = "ugs: buffer holds " + std::to_string(stored) + " states, fewer than " +
                            std::to_string(ugs.cfg.candidates) + " candidates; using a uniform goal";
    if (warn) {
      warn(msg);
    } else {
      std::clog << "warning: " << msg << '\n';
    }
    pick.goal = buffer.random_goals(1, rng).row(0).transpose();
    pick.fallback = true;
    return pick;
  }
  const Mat cands = buffer.random_goals(ugs.cfg.candidates, rng);
  pick.index = argmin_first(marginal_log_density(ugs.joint, cands));
  pick.goal = cands.row(pick.index).transpose();
  return pick;
}

Var gcrl_actor_loss(const FlowModel& actor, const FlowModel& joint, const Mat& s, const Mat& g,
                    Tape& tape, Rng& rng) {
  const auto n = s.rows();
  if (n == 0 || g.rows() != n) throw ContractError("gcrl_actor_loss: bad batch");
  tape.freeze(joint.params());
  Var enc = actor.encode(tape, CondBatch::from(hcat(s, g)));
  Var a_pi = actor.sample(tape, tape.constant(randn(n, actor.dim(), rng)), enc, nullptr);
  const std::vector<std::uint8_t> unmasked(static_cast<std::size_t>(n), 0);
  Var joint_enc = joint.encode(tape, tape.concat_cols(tape.constant(s), a_pi), unmasked);
  return tape.neg(tape.mean_all(joint.log_prob(tape, tape.constant(g), joint_enc)));
}

double gcrl_actor_update(FlowModel& actor, Adam& opt, const FlowModel& joint, const Mat& s,
                         const Mat& g, Rng& rng) {
  Tape tape;
  Var loss = gcrl_actor_loss(actor, joint, s, g, tape, rng);
  tape.backward(loss);
  opt.step(actor.params(), tape.param_grad(actor.params()));
  return tape.scalar_value(loss);
}

}  // namespace nfrl
