// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <vector>

#include "nfrl/envs/point_mass.hpp"

namespace nfrl {

struct Trajectory {
  Mat states;   ///< (T+1) x 4
  Mat actions;  ///< T x 2
  Vec rewards;  ///< T
  int episode_id = 0;
  int mode = -1;          ///< route family for scripted data, -1 otherwise
  bool terminal = false;  ///< ended by reaching the goal (no bootstrap past the end)

  int length() const noexcept { return static_cast<int>(actions.rows()); }
  /// Throws ContractError on inconsistent shapes or NaN.
  void validate() const;
};

using Policy = std::function<Vec2(const Vec4& state, int t)>;

/// Runs one episode from env.reset(rng) until done.
Trajectory rollout(PointMassEnv& env, const Policy& policy, Rng& rng, int episode_id = 0);

struct Dataset {
  EnvConfig env;
  std::uint64_t seed = 0;
  std::vector<Trajectory> trajectories;
  std::vector<double> mode_mix;  ///< recorded mixture of route families
  double expert_success = 0.0;

  std::size_t num_transitions() const;
};

struct ExpertDataConfig {
  int n_traj = 100;
  std::vector<double> mode_mix{1.0};  ///< one weight per maze route
  double action_noise = 0.1;          ///< Gaussian noise on expert actions
  double noisy_fraction = 0.0;        ///< share of trajectories driven with noisy_std instead
  double noisy_std = 1.0;
  double min_success = 0.95;
};

/// Scripted waypoint demonstrations. Throws DataError when the clean expert
/// episodes succeed less often than cfg.min_success.
Dataset generate_expert_dataset(const EnvConfig& env, const ExpertDataConfig& cfg, std::uint64_t seed);

/// File: one header line of key=value pairs, then little-endian float64
/// arrays lengths, episode_ids, modes, terminal, states, actions, rewards.
void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

/// Offset d in [1, remaining] with P(d) proportional to gamma^(d-1).
int sample_future_offset(int remaining, double gamma, Rng& rng);

/// Goal for step t taken from the same trajectory's future states.
/// Throws ContractError when t has no future (t >= length).
Vec2 sample_future_goal(const Trajectory& traj, int t, double gamma, Rng& rng);

struct TransitionRef {
  std::size_t traj = 0;
  int t = 0;
};

/// Column-stacked transitions; `done` is 1 when the step ended a terminal episode.
struct TransitionBatch {
  Mat s, a, r, s_next, done, g;
  std::vector<TransitionRef> refs;
  Eigen::Index rows() const noexcept { return s.rows(); }
};

class ReplayBuffer {
 public:
  using GoalExtractor = std::function<Vec2(const Vec4&)>;

  explicit ReplayBuffer(std::size_t capacity, GoalExtractor goal_of = position_of);

  /// Appends a trajectory, evicting the oldest when full.
  void add(Trajectory traj);
  std::size_t size() const noexcept { return trajs_.size(); }
  std::size_t capacity() const noexcept { return capacity_; }
  std::size_t num_transitions() const noexcept { return total_; }
  std::size_t num_states() const noexcept { return cum_states_.empty() ? 0 : cum_states_.back(); }
  const Trajectory& at(std::size_t i) const { return trajs_.at(i); }
  Vec2 goal_of(const Vec4& s) const { return goal_of_(s); }

  /// Uniform over stored transitions.
  TransitionRef sample_ref(Rng& rng) const;
  Vec2 sample_future_goal(const TransitionRef& ref, double gamma, Rng& rng) const;
  /// gamma_fut <= 0 leaves g empty.
  TransitionBatch sample_batch(int batch, Rng& rng, double gamma_fut = 0.0) const;
  /// Goal projections of uniformly drawn stored states (n x 2).
  Mat random_goals(int n, Rng& rng) const;

 private:
  void reindex();

  std::size_t capacity_;
  GoalExtractor goal_of_;
  std::vector<Trajectory> trajs_;
  std::size_t head_ = 0;
  std::vector<std::size_t> cum_;  ///< cumulative transition counts
  std::vector<std::size_t> cum_states_;
  std::size_t total_ = 0;
};

/// Entropy (nats) of the histogram of stored positions over a bins x bins
/// grid on the unit square.
double coverage_entropy(const ReplayBuffer& buffer, int bins);

}  // namespace nfrl
