// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/algos/policy.hpp"

#include <cmath>
#include <numbers>
#include <thread>

#include "nfrl/errors.hpp"
#include "nfrl/objectives/objectives.hpp"

namespace nfrl {
namespace {

Mat context_row(const Vec4& s, const std::optional<Vec2>& goal) {
  Mat ctx(1, goal ? kStateDim + kGoalDim : kStateDim);
  ctx.row(0).head<kStateDim>() = s.transpose();
  if (goal) ctx.row(0).tail<kGoalDim>() = goal->transpose();
  return ctx;
}

}  // namespace

Policy flow_policy(const FlowModel& actor, Rng& rng, std::optional<Vec2> goal, bool denoise,
                   double sigma) {
  return [&actor, &rng, goal, denoise, sigma](const Vec4& s, int) -> Vec2 {
    const CondBatch ctx = CondBatch::from(context_row(s, goal));
    const Mat z = randn(1, actor.dim(), rng);
    const Mat a = denoise ? denoised_from_prior_draws(actor, z, ctx, sigma)
                          : actor.sample_from_prior_draws(z, ctx);
    return a.row(0).transpose();
  };
}

Policy expert_policy(std::vector<Vec2> route) {
  auto expert = std::make_shared<WaypointExpert>(route);
  return [expert, route](const Vec4& s, int t) {
    if (t == 0) *expert = WaypointExpert(route);
    return expert->act(s);
  };
}

GaussianPolicy::GaussianPolicy(int ctx_dim, int action_dim, std::vector<int> hidden,
                               std::uint64_t seed)
    : ctx_dim_(ctx_dim), action_dim_(action_dim), params_(seed) {
  MlpSpec spec{ctx_dim, std::move(hidden), 2 * action_dim};
  spec.validate();
  net_ = Mlp(spec, params_, "gauss");
  Rng rng(seed);
  net_.init(params_, rng, false);
}

void GaussianPolicy::heads(Tape& tape, Var ctx, Var* mu, Var* log_std) const {
  Var out = net_.forward(tape, params_, ctx);
  *mu = tape.slice_cols(out, 0, action_dim_);
  *log_std = tape.clamp(tape.slice_cols(out, action_dim_, action_dim_), kMinLogStd, kMaxLogStd);
}

Var GaussianPolicy::log_prob(Tape& tape, Var a, Var ctx) const {
  Var mu, log_std;
  heads(tape, ctx, &mu, &log_std);
  Var zs = tape.mul(tape.sub(a, mu), tape.exp(tape.neg(log_std)));
  Var per = tape.add(tape.scale(tape.square(zs), -0.5), tape.neg(log_std));
  return tape.add_scalar(tape.sum_cols(per), -0.5 * action_dim_ * std::log(2.0 * std::numbers::pi));
}

Mat GaussianPolicy::sample(const Mat& ctx, Rng& rng) const {
  Tape t;
  t.freeze(params_);
  Var mu, log_std;
  heads(t, t.constant(ctx), &mu, &log_std);
  const Mat eps = randn(ctx.rows(), action_dim_, rng);
  return t.value(mu) + (t.value(log_std).array().exp() * eps.array()).matrix();
}

Mat GaussianPolicy::mean(const Mat& ctx) const {
  Tape t;
  t.freeze(params_);
  Var mu, log_std;
  heads(t, t.constant(ctx), &mu, &log_std);
  return t.value(mu);
}

double gaussian_bc_update(GaussianPolicy& policy, Adam& opt, const Mat& ctx, const Mat& a,
                          double noise_std, Rng& rng) {
  Mat x = a;
  if (noise_std > 0.0) x += noise_std * randn(a.rows(), a.cols(), rng);
  Tape tape;
  Var loss = tape.neg(
      tape.mean_all(policy.log_prob(tape, tape.constant(std::move(x)), tape.constant(ctx))));
  tape.backward(loss);
  opt.step(policy.params(), tape.param_grad(policy.params()));
  return tape.scalar_value(loss);
}

Policy gaussian_policy(const GaussianPolicy& pi, Rng& rng, std::optional<Vec2> goal) {
  return [&pi, &rng, goal](const Vec4& s, int) -> Vec2 {
    return pi.sample(context_row(s, goal), rng).row(0).transpose();
  };
}

namespace {

EvalStats summarise(const std::vector<Trajectory>& runs) {
  EvalStats st;
  st.episodes = static_cast<int>(runs.size());
  if (runs.empty()) return st;
  const double n = static_cast<double>(runs.size());
  double mean = 0.0;
  for (const auto& tr : runs) {
    st.success_rate += tr.terminal ? 1.0 : 0.0;
    st.mean_length += tr.length();
    mean += tr.rewards.sum();
  }
  mean /= n;
  double var = 0.0;
  for (const auto& tr : runs) var += (tr.rewards.sum() - mean) * (tr.rewards.sum() - mean);
  st.success_rate /= n;
  st.mean_length /= n;
  st.mean_return = mean;
  st.std_return = std::sqrt(var / n);
  return st;
}

std::uint64_t episode_seed(std::uint64_t seed, int e) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(e + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

EvalStats evaluate_episodes(const EnvConfig& env_cfg, const PolicyFactory& make_policy,
                            int n_episodes, std::uint64_t seed, int workers,
                            std::optional<Vec2> goal, std::vector<Trajectory>* trajectories) {
  if (n_episodes < 0) throw ContractError("evaluate_episodes: n_episodes must be >= 0");
  if (workers < 1) throw ContractError("evaluate_episodes: workers must be >= 1");
  EnvConfig cfg = env_cfg;
  cfg.reward_free = false;
  std::vector<Trajectory> runs(static_cast<std::size_t>(n_episodes));
  auto work = [&](int first) {
    PointMassEnv env(cfg);
    if (goal) env.set_goal(*goal);
    for (int e = first; e < n_episodes; e += workers) {
      Rng rng(episode_seed(seed, e));
      const Policy pol = make_policy(rng);
      runs[static_cast<std::size_t>(e)] = rollout(env, pol, rng, e);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  const EvalStats st = summarise(runs);
  if (trajectories) {
    for (auto& tr : runs) trajectories->push_back(std::move(tr));
  }
  return st;
}

EvalStats evaluate_policy(const EnvConfig& env_cfg, const Policy& policy, int n_episodes, Rng& rng,
                          std::optional<Vec2> goal, std::vector<Trajectory>* trajectories) {
  if (n_episodes < 1) throw ContractError("evaluate_policy: n_episodes must be >= 1");
  EnvConfig cfg = env_cfg;
  cfg.reward_free = false;
  PointMassEnv env(cfg);
  if (goal) env.set_goal(*goal);
  std::vector<Trajectory> runs;
  for (int e = 0; e < n_episodes; ++e) runs.push_back(rollout(env, policy, rng, e));
  const EvalStats st = summarise(runs);
  if (trajectories) {
    for (auto& tr : runs) trajectories->push_back(std::move(tr));
  }
  return st;
}

}  // namespace nfrl
