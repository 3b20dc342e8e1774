// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/envs/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "nfrl/errors.hpp"
#include "nfrl/version.hpp"

namespace nfrl {
namespace {

constexpr const char* kArrays = "lengths,episode_ids,modes,terminal,states,actions,rewards";

void put_f64(std::ostream& out, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(buf, 8);
}

double get_f64(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) throw FormatError("dataset: truncated array data");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

int as_count(double v, const char* what) {
  if (!(v >= 0.0) || v != std::floor(v) || v > 1e9) {
    throw FormatError(std::string("dataset: bad ") + what);
  }
  return static_cast<int>(v);
}

}  // namespace

void Trajectory::validate() const {
  const auto n = actions.rows();
  if (states.rows() != n + 1 || states.cols() != kStateDim || actions.cols() != kActionDim ||
      rewards.size() != n) {
    throw ContractError("trajectory: inconsistent shapes");
  }
  if (!states.allFinite() || !actions.allFinite() || !rewards.allFinite()) {
    throw ContractError("trajectory: non-finite entries");
  }
}

Trajectory rollout(PointMassEnv& env, const Policy& policy, Rng& rng, int episode_id) {
  std::vector<Vec4> states{env.reset(rng)};
  std::vector<Vec2> actions;
  std::vector<double> rewards;
  bool reached = false;
  while (!env.done()) {
    const Vec2 a = policy(env.state(), env.t()).cwiseMax(-1.0).cwiseMin(1.0);
    const StepResult r = env.step(a);
    actions.push_back(a);
    rewards.push_back(r.reward);
    states.push_back(r.state);
    reached = r.reached;
  }
  Trajectory tr;
  tr.states.resize(static_cast<Eigen::Index>(states.size()), kStateDim);
  tr.actions.resize(static_cast<Eigen::Index>(actions.size()), kActionDim);
  tr.rewards.resize(static_cast<Eigen::Index>(rewards.size()));
  for (std::size_t i = 0; i < states.size(); ++i) tr.states.row(static_cast<Eigen::Index>(i)) = states[i];
  for (std::size_t i = 0; i < actions.size(); ++i) {
    tr.actions.row(static_cast<Eigen::Index>(i)) = actions[i];
    tr.rewards(static_cast<Eigen::Index>(i)) = rewards[i];
  }
  tr.episode_id = episode_id;
  tr.terminal = reached;
  return tr;
}

std::size_t Dataset::num_transitions() const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += static_cast<std::size_t>(t.length());
  return n;
}

Dataset generate_expert_dataset(const EnvConfig& env_cfg, const ExpertDataConfig& cfg,
                                std::uint64_t seed) {
  if (cfg.n_traj < 1) throw ContractError("gen-data: n_traj must be >= 1");
  const MazeInfo& info = maze_info(env_cfg.maze);
  if (cfg.mode_mix.size() != info.routes.size()) {
    throw ConfigError("gen-data: maze '" + to_string(env_cfg.maze) + "' has " +
                      std::to_string(info.routes.size()) + " route(s) but mode_mix has " +
                      std::to_string(cfg.mode_mix.size()) + " weight(s)");
  }
  if (!(cfg.noisy_fraction >= 0.0 && cfg.noisy_fraction <= 1.0)) {
    throw ConfigError("gen-data: noisy_fraction must lie in [0, 1]");
  }
  for (double w : cfg.mode_mix) {
    if (!(w >= 0.0)) throw ConfigError("gen-data: negative mode weight");
  }
  EnvConfig ecfg = env_cfg;
  ecfg.reward_free = false;
  PointMassEnv env(ecfg);
  Rng rng(seed);
  std::discrete_distribution<int> pick_mode(cfg.mode_mix.begin(), cfg.mode_mix.end());
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> n01(0.0, 1.0);

  Dataset ds;
  ds.env = ecfg;
  ds.seed = seed;
  ds.mode_mix = cfg.mode_mix;
  int clean = 0, clean_ok = 0;
  for (int i = 0; i < cfg.n_traj; ++i) {
    const int mode = pick_mode(rng);
    const bool noisy = u01(rng) < cfg.noisy_fraction;
    const double std = noisy ? cfg.noisy_std : cfg.action_noise;
    WaypointExpert expert(info.routes[static_cast<std::size_t>(mode)]);
    Policy pol = [&](const Vec4& s, int) {
      Vec2 a = expert.act(s);
      a(0) += std * n01(rng);
      a(1) += std * n01(rng);
      return a;
    };
    Trajectory tr = rollout(env, pol, rng, i);
    tr.mode = mode;
    if (!noisy) {
      ++clean;
      clean_ok += tr.terminal;
    }
    ds.trajectories.push_back(std::move(tr));
  }
  ds.expert_success = clean > 0 ? static_cast<double>(clean_ok) / clean : 1.0;
  if (ds.expert_success < cfg.min_success) {
    throw DataError("gen-data: scripted expert succeeded on " +
                    format_double(100.0 * ds.expert_success) + "% of episodes, below " +
                    format_double(100.0 * cfg.min_success) + "%");
  }
  return ds;
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  KeyValues h = ds.env.to_kv();
  h.set("format", "nfrl-dataset");
  h.set("state_dim", kStateDim);
  h.set("action_dim", kActionDim);
  h.set("goal_dim", kGoalDim);
  h.set("n_traj", static_cast<long long>(ds.trajectories.size()));
  h.set("n_steps", static_cast<long long>(ds.num_transitions()));
  h.set("seed", std::to_string(ds.seed));
  std::string mix;
  for (std::size_t i = 0; i < ds.mode_mix.size(); ++i) {
    mix += (i ? "," : "") + format_double(ds.mode_mix[i]);
  }
  h.set("mode_mix", mix.empty() ? std::string("1") : mix);
  h.set("expert_success", ds.expert_success);
  h.set("generator", version_string());
  h.set("arrays", kArrays);
  out << h.to_line() << '\n';
  for (const auto& t : ds.trajectories) put_f64(out, t.length());
  for (const auto& t : ds.trajectories) put_f64(out, t.episode_id);
  for (const auto& t : ds.trajectories) put_f64(out, t.mode);
  for (const auto& t : ds.trajectories) put_f64(out, t.terminal ? 1.0 : 0.0);
  for (const auto& t : ds.trajectories) {
    for (Eigen::Index i = 0; i < t.states.size(); ++i) put_f64(out, t.states.data()[i]);
  }
  for (const auto& t : ds.trajectories) {
    for (Eigen::Index i = 0; i < t.actions.size(); ++i) put_f64(out, t.actions.data()[i]);
  }
  for (const auto& t : ds.trajectories) {
    for (Eigen::Index i = 0; i < t.rewards.size(); ++i) put_f64(out, t.rewards(i));
  }
  if (!out) throw FormatError("dataset: write failed");
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("dataset: missing header line");
  const KeyValues h = KeyValues::parse_line(line);
  if (!h.has("format") || h.get("format") != "nfrl-dataset") throw FormatError("dataset: not an nfrl dataset");
  if (h.get("arrays") != kArrays) throw FormatError("dataset: unsupported array layout");
  if (h.get_int("state_dim") != kStateDim || h.get_int("action_dim") != kActionDim) {
    throw FormatError("dataset: dimension mismatch");
  }
  Dataset ds;
  ds.env = EnvConfig::from_kv(h);
  ds.seed = std::stoull(h.get("seed"));
  ds.mode_mix = h.get_doubles("mode_mix");
  ds.expert_success = h.get_double("expert_success");
  const auto n = static_cast<std::size_t>(h.get_int("n_traj"));
  ds.trajectories.resize(n);
  for (auto& t : ds.trajectories) {
    const int len = as_count(get_f64(in), "trajectory length");
    t.states.resize(len + 1, kStateDim);
    t.actions.resize(len, kActionDim);
    t.rewards.resize(len);
  }
  for (auto& t : ds.trajectories) t.episode_id = static_cast<int>(get_f64(in));
  for (auto& t : ds.trajectories) t.mode = static_cast<int>(get_f64(in));
  for (auto& t : ds.trajectories) t.terminal = get_f64(in) != 0.0;
  for (auto& t : ds.trajectories) {
    for (Eigen::Index i = 0; i < t.states.size(); ++i) t.states.data()[i] = get_f64(in);
  }
  for (auto& t : ds.trajectories) {
    for (Eigen::Index i = 0; i < t.actions.size(); ++i) t.actions.data()[i] = get_f64(in);
  }
  for (auto& t : ds.trajectories) {
    for (Eigen::Index i = 0; i < t.rewards.size(); ++i) t.rewards(i) = get_f64(in);
  }
  if (static_cast<long long>(ds.num_transitions()) != h.get_int("n_steps")) {
    throw FormatError("dataset: step count does not match header");
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
    write_dataset(out, ds);
  }
  std::filesystem::rename(tmp, path);
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dataset " + path.string());
  return read_dataset(in);
}

int sample_future_offset(int remaining, double gamma, Rng& rng) {
  if (remaining < 1) throw ContractError("future goal: no future states");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("future goal: gamma must lie in [0, 1)");
  if (remaining == 1 || gamma == 0.0) return 1;
  // Inverse CDF of the geometric law truncated to [1, remaining].
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double mass = -std::expm1(remaining * std::log(gamma));
  const double k = std::floor(std::log1p(-u(rng) * mass) / std::log(gamma));
  return std::clamp(static_cast<int>(k) + 1, 1, remaining);
}

Vec2 sample_future_goal(const Trajectory& traj, int t, double gamma, Rng& rng) {
  if (t < 0 || t >= traj.length()) {
    throw ContractError("future goal: step " + std::to_string(t) + " has no future state");
  }
  const int d = sample_future_offset(traj.length() - t, gamma, rng);
  return traj.states.row(t + d).head<2>().transpose();
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, GoalExtractor goal_of)
    : capacity_(capacity), goal_of_(std::move(goal_of)) {
  if (capacity_ == 0) throw ContractError("replay buffer capacity must be >= 1");
}

void ReplayBuffer::add(Trajectory traj) {
  traj.validate();
  if (traj.length() < 1) throw ContractError("replay buffer: empty trajectory");
  if (trajs_.size() < capacity_) {
    trajs_.push_back(std::move(traj));
  } else {
    trajs_[head_] = std::move(traj);
    head_ = (head_ + 1) % capacity_;
  }
  reindex();
}

void ReplayBuffer::reindex() {
  cum_.resize(trajs_.size());
  cum_states_.resize(trajs_.size());
  std::size_t acc = 0, acc_s = 0;
  for (std::size_t i = 0; i < trajs_.size(); ++i) {
    acc += static_cast<std::size_t>(trajs_[i].length());
    acc_s += static_cast<std::size_t>(trajs_[i].states.rows());
    cum_[i] = acc;
    cum_states_[i] = acc_s;
  }
  total_ = acc;
}

TransitionRef ReplayBuffer::sample_ref(Rng& rng) const {
  if (total_ == 0) throw StateError("replay buffer is empty");
  std::uniform_int_distribution<std::size_t> u(0, total_ - 1);
  const std::size_t k = u(rng);
  const auto it = std::upper_bound(cum_.begin(), cum_.end(), k);
  const auto i = static_cast<std::size_t>(it - cum_.begin());
  const std::size_t before = i == 0 ? 0 : cum_[i - 1];
  return {i, static_cast<int>(k - before)};
}

Vec2 ReplayBuffer::sample_future_goal(const TransitionRef& ref, double gamma, Rng& rng) const {
  const Trajectory& tr = at(ref.traj);
  if (ref.t < 0 || ref.t >= tr.length()) throw ContractError("future goal: step has no future state");
  const int d = sample_future_offset(tr.length() - ref.t, gamma, rng);
  return goal_of_(tr.states.row(ref.t + d).transpose());
}

TransitionBatch ReplayBuffer::sample_batch(int batch, Rng& rng, double gamma_fut) const {
  if (batch < 1) throw ContractError("sample_batch: batch must be >= 1");
  TransitionBatch b;
  b.s.resize(batch, kStateDim);
  b.a.resize(batch, kActionDim);
  b.r.resize(batch, 1);
  b.s_next.resize(batch, kStateDim);
  b.done.resize(batch, 1);
  if (gamma_fut > 0.0) b.g.resize(batch, kGoalDim);
  b.refs.resize(static_cast<std::size_t>(batch));
  for (int i = 0; i < batch; ++i) {
    const TransitionRef ref = sample_ref(rng);
    const Trajectory& tr = trajs_[ref.traj];
    b.refs[static_cast<std::size_t>(i)] = ref;
    b.s.row(i) = tr.states.row(ref.t);
    b.a.row(i) = tr.actions.row(ref.t);
    b.r(i, 0) = tr.rewards(ref.t);
    b.s_next.row(i) = tr.states.row(ref.t + 1);
    b.done(i, 0) = tr.terminal && ref.t + 1 == tr.length() ? 1.0 : 0.0;
    if (gamma_fut > 0.0) b.g.row(i) = sample_future_goal(ref, gamma_fut, rng).transpose();
  }
  return b;
}

Mat ReplayBuffer::random_goals(int n, Rng& rng) const {
  if (trajs_.empty()) throw StateError("replay buffer is empty");
  const std::size_t total = cum_states_.back();
  std::uniform_int_distribution<std::size_t> u(0, total - 1);
  Mat g(n, kGoalDim);
  for (int i = 0; i < n; ++i) {
    const std::size_t k = u(rng);
    const auto j = static_cast<std::size_t>(std::upper_bound(cum_states_.begin(), cum_states_.end(), k) -
                                            cum_states_.begin());
    const std::size_t before = j == 0 ? 0 : cum_states_[j - 1];
    g.row(i) = goal_of_(trajs_[j].states.row(static_cast<Eigen::Index>(k - before)).transpose()).transpose();
  }
  return g;
}

double coverage_entropy(const ReplayBuffer& buffer, int bins) {
  if (bins < 1) throw ContractError("coverage_entropy: bins must be >= 1");
  std::vector<double> counts(static_cast<std::size_t>(bins * bins), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const Mat& s = buffer.at(i).states;
    for (Eigen::Index r = 0; r < s.rows(); ++r) {
      const int cx = std::clamp(static_cast<int>(s(r, 0) * bins), 0, bins - 1);
      const int cy = std::clamp(static_cast<int>(s(r, 1) * bins), 0, bins - 1);
      counts[static_cast<std::size_t>(cy * bins + cx)] += 1.0;
      total += 1.0;
    }
  }
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) h -= c / total * std::log(c / total);
  }
  return h;
}

}  // namespace nfrl
