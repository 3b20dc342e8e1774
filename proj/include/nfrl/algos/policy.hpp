// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "nfrl/envs/dataset.hpp"
#include "nfrl/flow/flow.hpp"
#include "nfrl/grad/adam.hpp"
#include "nfrl/grad/mlp.hpp"

namespace nfrl {

/// Closed-loop policy from a flow actor. The context is the state, or
/// state | goal when `goal` is set. Each call consumes one prior draw
/// z ~ N(0, I) from `rng`; with `denoise` the same z is pushed through the
/// score correction with `sigma`.
Policy flow_policy(const FlowModel& actor, Rng& rng, std::optional<Vec2> goal = std::nullopt,
                   bool denoise = false, double sigma = 0.1);

/// Scripted waypoint controller, restarted whenever t == 0.
Policy expert_policy(std::vector<Vec2> route);

/// Diagonal Gaussian policy N(mu(ctx), diag(exp(2 log_std(ctx)))), the
/// unimodal baseline for imitation experiments.
class GaussianPolicy {
 public:
  static constexpr double kMinLogStd = -5.0;
  static constexpr double kMaxLogStd = 2.0;

  GaussianPolicy(int ctx_dim, int action_dim, std::vector<int> hidden, std::uint64_t seed);

  /// B x 1 log-densities.
  Var log_prob(Tape& tape, Var a, Var ctx) const;
  Mat sample(const Mat& ctx, Rng& rng) const;
  Mat mean(const Mat& ctx) const;

  int action_dim() const noexcept { return action_dim_; }
  int ctx_dim() const noexcept { return ctx_dim_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

 private:
  void heads(Tape& tape, Var ctx, Var* mu, Var* log_std) const;

  int ctx_dim_;
  int action_dim_;
  ParamStore params_;
  Mlp net_;
};

/// One NLL step on noisy labels, mirroring bc_update.
double gaussian_bc_update(GaussianPolicy& policy, Adam& opt, const Mat& ctx, const Mat& a,
                          double noise_std, Rng& rng);

Policy gaussian_policy(const GaussianPolicy& pi, Rng& rng, std::optional<Vec2> goal = std::nullopt);

struct EvalStats {
  int episodes = 0;
  double success_rate = 0.0;
  double mean_return = 0.0;
  double std_return = 0.0;
  double mean_length = 0.0;
};

/// Runs n_episodes episodes (reward-bearing, toward `goal` or the maze goal).
/// When `trajectories` is non-null the rollouts are appended to it.
EvalStats evaluate_policy(const EnvConfig& env, const Policy& policy, int n_episodes, Rng& rng,
                          std::optional<Vec2> goal = std::nullopt,
                          std::vector<Trajectory>* trajectories = nullptr);

using PolicyFactory = std::function<Policy(Rng& rng)>;

/// Episode e runs with its own generator seeded from (seed, e), so results do
/// not depend on `workers`. n_episodes = 0 gives an empty report.
EvalStats evaluate_episodes(const EnvConfig& env, const PolicyFactory& make_policy, int n_episodes,
                            std::uint64_t seed, int workers = 1,
                            std::optional<Vec2> goal = std::nullopt,
                            std::vector<Trajectory>* trajectories = nullptr);

}  // namespace nfrl
