// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "nfrl/flow/flow.hpp"
#include "nfrl/kv.hpp"

namespace nfrl {

enum class Algo { density_mle, density_vi, bc, gcbc, rlbc, ugs };

Algo parse_algo(const std::string& name);
std::string to_string(Algo a);

/// Values the future-goal discount and the BC weight are tuned over.
inline constexpr std::array<double, 2> kGammaFutPresets{0.97, 0.99};
inline constexpr std::array<double, 2> kAlphaPresets{1.0, 10.0};

struct RunConfig {
  Algo algo = Algo::bc;
  std::string name;     ///< run directory name; empty gives "<algo>-s<seed>"
  std::string dataset;  ///< density: builtin set; vi: builtin target; bc/gcbc/rlbc: dataset file
  std::string maze = "big_maze";  ///< environment for ugs runs

  // flow architecture
  int blocks = 12;
  int channels = 512;
  int rep_dims = 512;
  int encoder_layers = 4;
  int encoder_width = 512;
  int coupling_layers = 2;
  std::string activation = "gelu";

  // optimisation
  double lr = 3e-4;
  int batch = 256;
  long long steps = 100000;
  double noise_std = 0.1;
  int n_samples = 10000;  ///< training set size for builtin density data

  // reinforcement learning
  double alpha_bc = 1.0;
  double lambda_ent = 0.0;
  double gamma = 0.99;
  double gamma_fut = 0.97;
  double tau = 0.005;
  bool twin_critic = true;
  int critic_width = 512;
  int critic_layers = 2;
  double mask_prob = 0.1;
  int candidates = 1024;
  double goal_noise_std = 0.05;
  int updates_per_episode = 64;
  std::string goal_selection = "min_density";  ///< or "uniform"
  int coverage_bins = 10;

  // evaluation and bookkeeping
  long long eval_every = 10000;
  int eval_episodes = 50;
  bool denoise = true;
  int workers = 1;
  long long log_every = 100;
  long long checkpoint_every = 10000;
  std::uint64_t seed = 0;

  /// Defaults for an algorithm (block count differs between them).
  static RunConfig defaults(Algo a);
  /// Starts from defaults(kv["algo"]) and applies every key. Unknown keys
  /// and malformed values raise ConfigError naming the field.
  static RunConfig from_kv(const KeyValues& kv);
  KeyValues to_kv() const;
  /// ConfigError("field '<name>': ...") on the first invalid field.
  void validate() const;

  std::string run_name() const;
  FlowSpec flow_spec(int dim, int cond_dim) const;
};

}  // namespace nfrl
