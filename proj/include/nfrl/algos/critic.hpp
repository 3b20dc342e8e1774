// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <vector>

#include "nfrl/grad/adam.hpp"
#include "nfrl/grad/mlp.hpp"

namespace nfrl {

struct CriticConfig {
  int state_dim = 4;
  int action_dim = 2;
  std::vector<int> hidden{256, 256};
  Activation activation = Activation::gelu;
  bool layernorm = true;
  double tau = 0.005;  ///< polyak rate of the target copy
  bool twin = true;    ///< false gives a single Q head
};

/// Q(s, a) heads sharing one parameter store plus a polyak-averaged target copy.
class Critic {
 public:
  Critic(const CriticConfig& cfg, std::uint64_t seed);

  /// B x 1 values of one head on the tape. input is s concatenated with a.
  Var q(Tape& tape, const ParamStore& store, int head, Var input) const;
  /// min over heads (or the single head) on the tape.
  Var q_min(Tape& tape, const ParamStore& store, Var input) const;
  /// Value-level min over heads, from online or target parameters.
  Vec values(const Mat& s, const Mat& a, bool use_target) const;

  /// target = (1 - tau) target + tau online.
  void polyak();
  void sync_target() { target_ = online_; }

  int heads() const noexcept { return cfg_.twin ? 2 : 1; }
  const CriticConfig& config() const noexcept { return cfg_; }
  ParamStore& online() noexcept { return online_; }
  const ParamStore& online() const noexcept { return online_; }
  ParamStore& target() noexcept { return target_; }
  const ParamStore& target() const noexcept { return target_; }
  const Mlp& head(int i) const { return nets_.at(static_cast<std::size_t>(i)); }

 private:
  CriticConfig cfg_;
  ParamStore online_;
  ParamStore target_;
  std::vector<Mlp> nets_;
};

using ActionSampler = std::function<Mat(const Mat& s, Rng& rng)>;

struct TdBatch {
  Mat s, a, r, s_next, done;
};

/// Sum over heads of mean (Q_i(s, a) - y)^2 with
/// y = r + gamma (1 - done) min_i Qbar_i(s', a').
Var critic_loss(const Critic& critic, const TdBatch& batch, const Mat& next_actions, double gamma,
                Tape& tape);

struct CriticMetrics {
  double loss = 0.0;
};

/// Draws a' from `next_action`, takes one optimizer step, then applies polyak.
CriticMetrics critic_update(Critic& critic, Adam& opt, const TdBatch& batch,
                            const ActionSampler& next_action, double gamma, Rng& rng);

}  // namespace nfrl
