// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nfrl/envs/dataset.hpp"
#include "nfrl/errors.hpp"

using namespace nfrl;

namespace {

// Reference resolver: for one axis, collect every wall line strictly passed
// over (or landed within the margin of) and stop at the nearest one.
double ref_move(double from, double to, double other, bool x_axis, const std::vector<Wall>& walls,
                bool& hit) {
  double best = to;
  double best_gap = 1e9;
  hit = false;
  for (const Wall& w : walls) {
    if (w.vertical() != x_axis) continue;
    const double lo = x_axis ? std::min(w.y0, w.y1) : std::min(w.x0, w.x1);
    const double hi = x_axis ? std::max(w.y0, w.y1) : std::max(w.x0, w.x1);
    const double c = x_axis ? w.x0 : w.y0;
    if (other < lo || other > hi || from == c) continue;
    const double side = from < c ? -1.0 : 1.0;
    const double stop = c + side * kWallMargin;
    if ((to - stop) * side < 0.0 && std::abs(c - from) < best_gap) {
      best_gap = std::abs(c - from);
      best = stop;
      hit = true;
    }
  }
  if (best < 0.0 || best > 1.0) {
    best = std::clamp(best, 0.0, 1.0);
    hit = true;
  }
  return best;
}

Vec4 ref_transition(const EnvConfig& c, const Vec4& s, Vec2 a) {
  const auto& walls = maze_info(c.maze).walls;
  a = a.cwiseMax(-1.0).cwiseMin(1.0);
  double vx = (1.0 - c.drag) * s(2) + c.dt * a(0);
  double vy = (1.0 - c.drag) * s(3) + c.dt * a(1);
  bool hit = false;
  const double x = ref_move(s(0), s(0) + c.dt * vx, s(1), true, walls, hit);
  if (hit) vx = 0.0;
  const double y = ref_move(s(1), s(1) + c.dt * vy, x, false, walls, hit);
  if (hit) vy = 0.0;
  return {x, y, vx, vy};
}

bool crosses_wall(const Vec4& s, const Vec4& n, const std::vector<Wall>& walls) {
  for (const Wall& w : walls) {
    if (w.vertical()) {
      const bool span = s(1) >= std::min(w.y0, w.y1) && s(1) <= std::max(w.y0, w.y1);
      if (span && (s(0) - w.x0) * (n(0) - w.x0) < 0.0) return true;
    } else {
      const bool span = n(0) >= std::min(w.x0, w.x1) && n(0) <= std::max(w.x0, w.x1);
      if (span && (s(1) - w.y0) * (n(1) - w.y0) < 0.0) return true;
    }
  }
  return false;
}

Trajectory line_traj(int id, int len) {
  Trajectory t;
  t.states = Mat::Zero(len + 1, kStateDim);
  for (int i = 0; i <= len; ++i) {
    t.states(i, 0) = id;
    t.states(i, 1) = i;
  }
  t.actions = Mat::Zero(len, kActionDim);
  t.rewards = Vec::Zero(len);
  t.episode_id = id;
  return t;
}

}  // namespace

TEST_CASE("zero action keeps a resting mass in place and coasting follows drag") {
  PointMassEnv env;
  Vec4 s(0.3, 0.4, 0.0, 0.0);
  env.reset(s);
  const StepResult r = env.step(Vec2::Zero());
  CHECK(r.state == s);

  Vec4 moving(0.3, 0.4, 0.2, -0.1);
  const Vec4 n = env.transition(moving, Vec2::Zero());
  CHECK(n(2) == doctest::Approx(0.18).epsilon(1e-15));
  CHECK(n(0) == doctest::Approx(0.3 + 0.05 * 0.18).epsilon(1e-15));
  CHECK(n(1) == doctest::Approx(0.4 - 0.05 * 0.09).epsilon(1e-15));
}

TEST_CASE("constant push toward the goal in an open field shrinks the distance") {
  PointMassEnv env;
  env.reset(Vec4(0.2, 0.2, 0.0, 0.0));
  const Vec2 a = (env.goal() - Vec2(0.2, 0.2)).normalized();
  double prev = (position_of(env.state()) - env.goal()).norm();
  int steps = 0;
  while (!env.done()) {
    const StepResult r = env.step(a);
    const double d = (position_of(r.state) - env.goal()).norm();
    CHECK(d < prev);
    CHECK(r.reward == doctest::Approx(-d));
    prev = d;
    ++steps;
  }
  CHECK(prev < 0.05);
  CHECK(steps < 200);
}

TEST_CASE("pushing into a wall zeroes the normal velocity") {
  EnvConfig c;
  c.maze = MazeId::u_maze;  // wall y = 0.5 for x in [0, 0.7]
  PointMassEnv env(c);
  const Vec4 n = env.transition(Vec4(0.3, 0.499, 0.1, 0.4), Vec2(0.0, 1.0));
  CHECK(n(1) == 0.5 - kWallMargin);
  CHECK(n(3) == 0.0);
  CHECK(n(2) == doctest::Approx(0.9 * 0.1));
  CHECK(n(0) == doctest::Approx(0.3 + 0.05 * 0.09));

  const Vec4 b = env.transition(Vec4(0.999, 0.2, 0.5, 0.0), Vec2(1.0, 0.0));
  CHECK(b(0) == 1.0);
  CHECK(b(2) == 0.0);
}

TEST_CASE("transitions agree with the reference collision resolver") {
  Rng rng(3);
  std::uniform_real_distribution<double> pos(0.0, 1.0), vel(-0.6, 0.6), act(-1.5, 1.5);
  for (MazeId m : {MazeId::open, MazeId::u_maze, MazeId::big_maze, MazeId::two_rooms}) {
    EnvConfig c = EnvConfig::for_maze(m);
    PointMassEnv env(c);
    int mismatches = 0;
    for (int i = 0; i < 20000; ++i) {
      // Scale velocities up so that many steps reach a wall.
      const Vec4 s(pos(rng), pos(rng), 4.0 * vel(rng), 4.0 * vel(rng));
      const Vec2 a(act(rng), act(rng));
      const Vec4 got = env.transition(s, a);
      const Vec4 want = ref_transition(c, s, a);
      mismatches += (got - want).cwiseAbs().maxCoeff() > 1e-15;
    }
    CHECK_MESSAGE(mismatches == 0, to_string(m));
  }
}

TEST_CASE("random rollouts never pass through walls or leave the unit square") {
  Rng rng(4);
  std::uniform_real_distribution<double> act(-1.0, 1.0);
  for (MazeId m : {MazeId::u_maze, MazeId::big_maze, MazeId::two_rooms}) {
    EnvConfig c = EnvConfig::for_maze(m);
    c.reward_free = true;
    c.horizon = 20000;
    PointMassEnv env(c);
    env.reset(rng);
    int bad = 0;
    for (int i = 0; i < 20000; ++i) {
      const Vec4 s = env.state();
      const StepResult r = env.step(Vec2(act(rng), act(rng)));
      bad += crosses_wall(s, r.state, env.walls());
      bad += r.state(0) < 0.0 || r.state(0) > 1.0 || r.state(1) < 0.0 || r.state(1) > 1.0;
    }
    CHECK(bad == 0);
  }
}

TEST_CASE("episode bookkeeping") {
  EnvConfig c;
  c.horizon = 3;
  PointMassEnv env(c);
  CHECK_THROWS_AS(env.step(Vec2::Zero()), StateError);
  env.reset(Vec4(0.5, 0.5, 0.0, 0.0));
  CHECK_THROWS_AS(env.step(Vec2(std::nan(""), 0.0)), ContractError);
  env.step(Vec2::Zero());
  env.step(Vec2::Zero());
  CHECK(env.step(Vec2::Zero()).done);
  CHECK_THROWS_AS(env.step(Vec2::Zero()), StateError);

  c.reward_free = true;
  PointMassEnv free(c);
  free.reset(Vec4(0.8, 0.8, 0.0, 0.0));  // on the goal
  const StepResult r = free.step(Vec2::Zero());
  CHECK(r.reward == 0.0);
  CHECK_FALSE(r.done);

  CHECK_THROWS_AS(parse_maze("spiral"), ConfigError);
  EnvConfig bad;
  bad.dt = 0.0;
  CHECK_THROWS_AS(PointMassEnv{bad}, ConfigError);
}

TEST_CASE("future offsets follow the truncated geometric law") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) CHECK(sample_future_offset(50, 1e-300, rng) == 1);
  for (int i = 0; i < 100; ++i) CHECK(sample_future_offset(1, 0.97, rng) == 1);
  CHECK_THROWS_AS(sample_future_offset(0, 0.97, rng), ContractError);

  const int n = 200;
  const double gamma = 0.97;
  const int draws = 1000000;
  std::vector<double> counts(n + 1, 0.0);
  for (int i = 0; i < draws; ++i) {
    const int d = sample_future_offset(n, gamma, rng);
    REQUIRE(d >= 1);
    REQUIRE(d <= n);
    counts[static_cast<std::size_t>(d)] += 1.0;
  }
  double z = 0.0;
  for (int d = 1; d <= n; ++d) z += std::pow(gamma, d - 1);
  // Pool the tail so every cell expects at least 5 draws.
  double chi2 = 0.0, obs_tail = 0.0, exp_tail = 0.0;
  int cells = 0;
  for (int d = 1; d <= n; ++d) {
    const double e = draws * std::pow(gamma, d - 1) / z;
    if (e >= 5.0) {
      chi2 += (counts[static_cast<std::size_t>(d)] - e) * (counts[static_cast<std::size_t>(d)] - e) / e;
      ++cells;
    } else {
      obs_tail += counts[static_cast<std::size_t>(d)];
      exp_tail += e;
    }
  }
  if (exp_tail > 0.0) {
    chi2 += (obs_tail - exp_tail) * (obs_tail - exp_tail) / exp_tail;
    ++cells;
  }
  const double k = cells - 1;
  // Wilson-Hilferty: upper 1% point of chi2_k.
  const double crit = k * std::pow(1.0 - 2.0 / (9.0 * k) + 2.326 * std::sqrt(2.0 / (9.0 * k)), 3.0);
  CHECK(chi2 < crit);
}

TEST_CASE("future goals come from the same trajectory's later states") {
  ReplayBuffer buf(10);
  for (int id = 0; id < 5; ++id) buf.add(line_traj(id, 3 + 4 * id));
  Rng rng(6);
  for (int i = 0; i < 20000; ++i) {
    const TransitionRef ref = buf.sample_ref(rng);
    const Vec2 g = buf.sample_future_goal(ref, 0.9, rng);
    REQUIRE(g(0) == static_cast<double>(ref.traj));
    REQUIRE(g(1) > ref.t);
    REQUIRE(g(1) <= buf.at(ref.traj).length());
  }
  const Trajectory& t0 = buf.at(0);
  CHECK_THROWS_AS(sample_future_goal(t0, t0.length(), 0.9, rng), ContractError);
  CHECK(sample_future_goal(t0, t0.length() - 1, 0.9, rng)(1) == t0.length());
}

TEST_CASE("replay buffer sampling, eviction and terminal flags") {
  ReplayBuffer buf(2);
  Trajectory a = line_traj(0, 2), b = line_traj(1, 6), c = line_traj(2, 4);
  c.terminal = true;
  buf.add(a);
  buf.add(b);
  CHECK(buf.num_transitions() == 8);
  buf.add(c);
  CHECK(buf.size() == 2);
  CHECK(buf.num_transitions() == 10);
  CHECK(buf.at(0).episode_id == 2);

  Rng rng(7);
  const TransitionBatch batch = buf.sample_batch(4000, rng, 0.99);
  int from_c = 0;
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    const auto& ref = batch.refs[static_cast<std::size_t>(i)];
    const bool last_of_c = buf.at(ref.traj).episode_id == 2 && ref.t == 3;
    CHECK(batch.done(i, 0) == (last_of_c ? 1.0 : 0.0));
    CHECK(batch.s_next(i, 1) == batch.s(i, 1) + 1.0);
    from_c += buf.at(ref.traj).episode_id == 2;
  }
  // c holds 4 of the 10 transitions.
  CHECK(std::abs(from_c / 4000.0 - 0.4) < 0.04);

  const Mat goals = buf.random_goals(100, rng);
  for (Eigen::Index i = 0; i < goals.rows(); ++i) CHECK((goals(i, 0) == 1.0 || goals(i, 0) == 2.0));
  CHECK_THROWS_AS(ReplayBuffer(4).sample_ref(rng), StateError);
}

TEST_CASE("scripted experts solve every maze") {
  for (MazeId m : {MazeId::open, MazeId::u_maze, MazeId::big_maze}) {
    ExpertDataConfig cfg;
    cfg.n_traj = 100;
    const Dataset ds = generate_expert_dataset(EnvConfig::for_maze(m), cfg, 11);
    CHECK_MESSAGE(ds.expert_success >= 0.95, to_string(m));
    int close = 0;
    for (const auto& t : ds.trajectories) {
      const Vec2 end = t.states.row(t.length()).head<2>().transpose();
      close += (end - maze_info(m).goal).norm() < 0.05;
    }
    CHECK(close >= 95);
    if (m == MazeId::open) CHECK(close == 100);
  }
}

TEST_CASE("two-door expert data mixes both route families") {
  ExpertDataConfig cfg;
  cfg.n_traj = 1000;
  cfg.mode_mix = {0.5, 0.5};
  const Dataset ds = generate_expert_dataset(EnvConfig::for_maze(MazeId::two_rooms), cfg, 12);
  int upper = 0;
  for (const auto& t : ds.trajectories) {
    upper += t.mode == 1;
    // Route family is visible in where the path crosses the dividing wall.
    bool seen = false;
    for (int i = 0; i < t.length() && !seen; ++i) {
      if (t.states(i, 0) < 0.5 && t.states(i + 1, 0) >= 0.5) {
        CHECK((t.states(i, 1) > 0.5) == (t.mode == 1));
        seen = true;
      }
    }
  }
  CHECK(std::abs(upper - 500) <= 5.0 * std::sqrt(250.0));
  CHECK(ds.expert_success >= 0.95);

  cfg.mode_mix = {1.0};
  CHECK_THROWS_AS(generate_expert_dataset(EnvConfig::for_maze(MazeId::two_rooms), cfg, 1),
                  ConfigError);
}

TEST_CASE("generation fails loudly when the expert cannot finish") {
  EnvConfig c = EnvConfig::for_maze(MazeId::u_maze);
  c.horizon = 10;
  ExpertDataConfig cfg;
  cfg.n_traj = 5;
  CHECK_THROWS_AS(generate_expert_dataset(c, cfg, 1), DataError);
  cfg.n_traj = 0;
  CHECK_THROWS_AS(generate_expert_dataset(c, cfg, 1), ContractError);
}

TEST_CASE("stored actions replay to identical states") {
  ExpertDataConfig cfg;
  cfg.n_traj = 20;
  cfg.noisy_fraction = 0.5;
  const Dataset ds = generate_expert_dataset(EnvConfig::for_maze(MazeId::u_maze), cfg, 13);
  PointMassEnv env(ds.env);
  for (const auto& t : ds.trajectories) {
    env.reset(Vec4(t.states.row(0).transpose()));
    for (int i = 0; i < t.length(); ++i) {
      const StepResult r = env.step(t.actions.row(i).transpose());
      REQUIRE(r.state == Vec4(t.states.row(i + 1).transpose()));
      REQUIRE(r.reward == t.rewards(i));
    }
  }
}

TEST_CASE("dataset files round-trip bit for bit") {
  ExpertDataConfig cfg;
  cfg.n_traj = 30;
  cfg.mode_mix = {0.3, 0.7};
  const Dataset ds = generate_expert_dataset(EnvConfig::for_maze(MazeId::two_rooms), cfg, 14);
  std::stringstream ss;
  write_dataset(ss, ds);
  const std::string bytes = ss.str();
  CHECK(bytes.substr(0, bytes.find('\n')).find("maze=two_rooms") != std::string::npos);

  const Dataset back = read_dataset(ss);
  REQUIRE(back.trajectories.size() == ds.trajectories.size());
  for (std::size_t i = 0; i < ds.trajectories.size(); ++i) {
    const auto& x = ds.trajectories[i];
    const auto& y = back.trajectories[i];
    CHECK(x.states == y.states);
    CHECK(x.actions == y.actions);
    CHECK(x.rewards == y.rewards);
    CHECK(x.mode == y.mode);
    CHECK(x.terminal == y.terminal);
    CHECK(x.episode_id == y.episode_id);
  }
  CHECK(back.seed == 14);
  CHECK(back.mode_mix == ds.mode_mix);
  CHECK(back.env.horizon == ds.env.horizon);

  std::stringstream again;
  write_dataset(again, back);
  CHECK(again.str() == bytes);

  std::stringstream truncated(bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_dataset(truncated), FormatError);
  std::stringstream junk("format=other\n");
  CHECK_THROWS_AS(read_dataset(junk), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "nfrl_test_dataset.bin";
  save_dataset(path, ds);
  CHECK(load_dataset(path).num_transitions() == ds.num_transitions());
  std::filesystem::remove(path);
}
