// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/algos/critic.hpp"

#include "nfrl/errors.hpp"

namespace nfrl {

Critic::Critic(const CriticConfig& cfg, std::uint64_t seed) : cfg_(cfg), online_(seed) {
  if (cfg_.state_dim < 1 || cfg_.action_dim < 1) throw ConfigError("critic: dims must be >= 1");
  if (!(cfg_.tau >= 0.0 && cfg_.tau <= 1.0)) throw ConfigError("critic: tau must lie in [0, 1]");
  MlpSpec spec{cfg_.state_dim + cfg_.action_dim, cfg_.hidden, 1, cfg_.layernorm, cfg_.activation};
  spec.validate();
  for (int h = 0; h < heads(); ++h) nets_.emplace_back(spec, online_, "q" + std::to_string(h + 1));
  online_.values().assign(online_.size(), 0.0);
  Rng rng(seed);
  for (const auto& n : nets_) n.init(online_, rng, false);
  target_ = online_;
}

Var Critic::q(Tape& tape, const ParamStore& store, int h, Var input) const {
  return head(h).forward(tape, store, input);
}

Var Critic::q_min(Tape& tape, const ParamStore& store, Var input) const {
  Var out = q(tape, store, 0, input);
  for (int h = 1; h < heads(); ++h) out = tape.minimum(out, q(tape, store, h, input));
  return out;
}

Vec Critic::values(const Mat& s, const Mat& a, bool use_target) const {
  if (s.rows() != a.rows()) throw ContractError("critic: state/action batch mismatch");
  const ParamStore& store = use_target ? target_ : online_;
  Mat in(s.rows(), s.cols() + a.cols());
  in << s, a;
  Tape t;
  t.freeze(store);
  return t.value(q_min(t, store, t.constant(std::move(in)))).col(0);
}

void Critic::polyak() {
  auto& tv = target_.values();
  const auto& ov = online_.values();
  for (std::size_t i = 0; i < tv.size(); ++i) tv[i] = (1.0 - cfg_.tau) * tv[i] + cfg_.tau * ov[i];
}

Var critic_loss(const Critic& critic, const TdBatch& b, const Mat& next_actions, double gamma,
                Tape& tape) {
  const auto n = b.s.rows();
  if (n == 0) throw ContractError("critic_loss: empty batch");
  if (b.a.rows() != n || b.r.rows() != n || b.s_next.rows() != n || b.done.rows() != n ||
      next_actions.rows() != n) {
    throw ContractError("critic_loss: batch rows disagree");
  }
  const Vec next_q = critic.values(b.s_next, next_actions, true);
  Mat y = b.r + gamma * ((1.0 - b.done.array()) * next_q.array()).matrix();
  Mat in(n, b.s.cols() + b.a.cols());
  in << b.s, b.a;
  Var input = tape.constant(std::move(in));
  Var target = tape.constant(std::move(y));
  Var loss = tape.mean_all(tape.square(tape.sub(critic.q(tape, critic.online(), 0, input), target)));
  for (int h = 1; h < critic.heads(); ++h) {
    loss = tape.add(loss, tape.mean_all(tape.square(
                              tape.sub(critic.q(tape, critic.online(), h, input), target))));
  }
  return loss;
}

CriticMetrics critic_update(Critic& critic, Adam& opt, const TdBatch& batch,
                            const ActionSampler& next_action, double gamma, Rng& rng) {
  const Mat a_next = next_action(batch.s_next, rng);
  Tape tape;
  Var loss = critic_loss(critic, batch, a_next, gamma, tape);
  tape.backward(loss);
  opt.step(critic.online(), tape.param_grad(critic.online()));
  critic.polyak();
  return {tape.scalar_value(loss)};
}

}  // namespace nfrl
