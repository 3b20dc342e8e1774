// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>

#include "nfrl/algos/critic.hpp"
#include "nfrl/envs/dataset.hpp"
#include "nfrl/flow/flow.hpp"
#include "nfrl/objectives/objectives.hpp"

namespace nfrl {

/// Row-wise concatenation [a | b].
Mat hcat(const Mat& a, const Mat& b);
/// TdBatch view of a replay sample.
TdBatch td_batch(const TransitionBatch& b);

// ---- behaviour cloning ----

/// One MLE step on log pi(a | s) with Gaussian label noise; returns the NLL.
double bc_update(FlowModel& policy, Adam& opt, const Mat& s, const Mat& a, double noise_std, Rng& rng);
double bc_update(FlowModel& policy, Adam& opt, const ReplayBuffer& data, int batch, double noise_std,
                 Rng& rng);

/// Goal-conditioned variant: ctx = s | g with g drawn from the same
/// trajectory's future (truncated geometric with gamma_fut).
double gcbc_update(FlowModel& policy, Adam& opt, const ReplayBuffer& data, int batch,
                   double gamma_fut, double noise_std, Rng& rng);

// ---- offline actor-critic ----

struct ActorLossWeights {
  double lambda_ent = 0.0;    ///< weight of -log pi on policy samples
  double alpha_bc = 1.0;      ///< weight of the data log-likelihood
  double bc_noise_std = 0.1;  ///< label noise on the data actions
};

struct ActorTerms {
  Var loss;
  Var q_pi;         ///< B x 1 critic value of the sampled actions
  Var log_pi_pi;    ///< B x 1 log-density of the sampled actions
  Var log_pi_data;  ///< B x 1 log-density of the (noised) data actions
};

/// Action-value on the tape: (tape, s, a) -> B x 1.
using QFn = std::function<Var(Tape&, Var s, Var a)>;

/// min over the critic's online heads, with its parameters frozen on the tape.
QFn critic_q(const Critic& critic);

/// -mean[Q(s, a_pi) - lambda log pi(a_pi | s)] - alpha mean log pi(a | s)
/// with a_pi = f^{-1}(z; s) reparameterised.
ActorTerms actor_loss(const FlowModel& actor, const QFn& q, const Mat& s, const Mat& a,
                      const ActorLossWeights& w, Tape& tape, Rng& rng);

struct ActorMetrics {
  double loss = 0.0;
  double q_pi = 0.0;
  double log_pi_data = 0.0;
};

ActorMetrics actor_update(FlowModel& actor, Adam& opt, const QFn& q, const Mat& s, const Mat& a,
                          const ActorLossWeights& w, Rng& rng);

/// Next-action sampler drawing from a flow policy conditioned on the state.
ActionSampler flow_sampler(const FlowModel& actor);

// ---- goal-conditioned Q estimation and goal selection ----

struct UgsConfig {
  int candidates = 1024;
  double goal_noise_std = 0.05;
  double gamma = 0.99;
  double mask_prob = 0.1;
  int updates_per_episode = 64;
};

/// Joint density model p(g | s, a) whose masked context gives p(g).
struct UgsState {
  FlowModel joint;
  UgsConfig cfg;
};

/// MLE on future goals with context s | a; each row's context is masked
/// with probability cfg.mask_prob and goals get N(0, goal_noise_std^2) noise.
Var gcrl_q_loss(const UgsState& ugs, const Mat& s, const Mat& a, const Mat& g_future, Tape& tape,
                Rng& rng);
double gcrl_q_update(UgsState& ugs, Adam& opt, const Mat& s, const Mat& a, const Mat& g_future,
                     Rng& rng);
double gcrl_q_update(UgsState& ugs, Adam& opt, const ReplayBuffer& buffer, int batch, Rng& rng);

/// log p(g) under the masked (marginal) context, one entry per row of goals.
Vec marginal_log_density(const FlowModel& joint, const Mat& goals);

/// Index of the smallest entry; the first one wins ties.
Eigen::Index argmin_first(const Vec& v);

struct GoalPick {
  Vec2 goal = Vec2::Zero();
  Eigen::Index index = 0;
  bool fallback = false;
};

using WarningSink = std::function<void(const std::string&)>;

/// Draws cfg.candidates goals from the buffer and returns the one with the
/// lowest marginal density. With fewer stored states than candidates it
/// returns a uniform buffer goal and reports through `warn`.
GoalPick select_ugs_goal(const UgsState& ugs, const ReplayBuffer& buffer, Rng& rng,
                         const WarningSink& warn = {});

/// -mean log p(g | s, a_pi) with a_pi = f^{-1}(z; s | g) from the actor and
/// the joint model frozen.
Var gcrl_actor_loss(const FlowModel& actor, const FlowModel& joint, const Mat& s, const Mat& g,
                    Tape& tape, Rng& rng);
double gcrl_actor_update(FlowModel& actor, Adam& opt, const FlowModel& joint, const Mat& s,
                         const Mat& g, Rng& rng);

}  // namespace nfrl
