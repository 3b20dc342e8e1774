// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/envs/point_mass.hpp"

#include <algorithm>
#include <cmath>

#include "nfrl/errors.hpp"

namespace nfrl {
namespace {

MazeInfo make_open() {
  MazeInfo m;
  m.start = {0.2, 0.2};
  m.goal = {0.8, 0.8};
  m.routes = {{m.goal}};
  return m;
}

MazeInfo make_u_maze() {
  MazeInfo m;
  m.walls = {{0.0, 0.5, 0.7, 0.5}};
  m.start = {0.15, 0.25};
  m.goal = {0.15, 0.75};
  m.routes = {{{0.85, 0.25}, {0.85, 0.75}, m.goal}};
  return m;
}

// Serpentine of four corridors, 0.25 wide.
MazeInfo make_big_maze() {
  MazeInfo m;
  m.walls = {{0.0, 0.25, 0.75, 0.25}, {0.25, 0.5, 1.0, 0.5}, {0.0, 0.75, 0.75, 0.75}};
  m.start = {0.125, 0.125};
  m.goal = {0.125, 0.875};
  m.horizon = 500;
  m.routes = {{{0.875, 0.125},
               {0.875, 0.375},
               {0.125, 0.375},
               {0.125, 0.625},
               {0.875, 0.625},
               {0.875, 0.875},
               m.goal}};
  return m;
}

// A dividing wall with two doors; each door is one route family.
MazeInfo make_two_rooms() {
  MazeInfo m;
  m.walls = {{0.5, 0.0, 0.5, 0.1}, {0.5, 0.3, 0.5, 0.7}, {0.5, 0.9, 0.5, 1.0}};
  m.start = {0.2, 0.5};
  m.goal = {0.8, 0.5};
  m.routes = {{{0.4, 0.2}, {0.6, 0.2}, m.goal}, {{0.4, 0.8}, {0.6, 0.8}, m.goal}};
  return m;
}

bool within(double v, double lo, double hi) { return v >= std::min(lo, hi) && v <= std::max(lo, hi); }

// Moves coordinate `axis` from `from` to `to`, stopping short of the first
// wall crossed. `other` is the fixed coordinate along the wall.
double sweep(double from, double to, double other, int axis, const std::vector<Wall>& walls,
             bool* hit) {
  double result = to;
  *hit = false;
  auto block = [&](double c) {
    if (from < c && result > c - kWallMargin) {
      result = c - kWallMargin;
      *hit = true;
    } else if (from > c && result < c + kWallMargin) {
      result = c + kWallMargin;
      *hit = true;
    }
  };
  for (const Wall& w : walls) {
    if (axis == 0 && w.vertical() && within(other, w.y0, w.y1)) block(w.x0);
    if (axis == 1 && !w.vertical() && within(other, w.x0, w.x1)) block(w.y0);
  }
  if (result < 0.0) {
    result = 0.0;
    *hit = true;
  } else if (result > 1.0) {
    result = 1.0;
    *hit = true;
  }
  return result;
}

}  // namespace

MazeId parse_maze(const std::string& name) {
  if (name == "open") return MazeId::open;
  if (name == "u_maze") return MazeId::u_maze;
  if (name == "big_maze") return MazeId::big_maze;
  if (name == "two_rooms") return MazeId::two_rooms;
  throw ConfigError("unknown maze '" + name + "'");
}

std::string to_string(MazeId m) {
  switch (m) {
    case MazeId::open: return "open";
    case MazeId::u_maze: return "u_maze";
    case MazeId::big_maze: return "big_maze";
    case MazeId::two_rooms: return "two_rooms";
  }
  return "?";
}

const MazeInfo& maze_info(MazeId m) {
  static const MazeInfo open = make_open();
  static const MazeInfo u = make_u_maze();
  static const MazeInfo big = make_big_maze();
  static const MazeInfo rooms = make_two_rooms();
  switch (m) {
    case MazeId::open: return open;
    case MazeId::u_maze: return u;
    case MazeId::big_maze: return big;
    case MazeId::two_rooms: return rooms;
  }
  return open;
}

EnvConfig EnvConfig::for_maze(MazeId m) {
  EnvConfig c;
  c.maze = m;
  c.horizon = maze_info(m).horizon;
  return c;
}

void EnvConfig::validate() const {
  if (!(dt > 0.0)) throw ConfigError("env: dt must be > 0");
  if (!(drag >= 0.0 && drag < 1.0)) throw ConfigError("env: drag must lie in [0, 1)");
  if (horizon < 1) throw ConfigError("env: horizon must be >= 1");
  if (!(goal_radius > 0.0)) throw ConfigError("env: goal_radius must be > 0");
  if (!(start_noise >= 0.0)) throw ConfigError("env: start_noise must be >= 0");
}

KeyValues EnvConfig::to_kv() const {
  KeyValues kv;
  kv.set("maze", to_string(maze));
  kv.set("dt", dt);
  kv.set("drag", drag);
  kv.set("H", horizon);
  kv.set("goal_radius", goal_radius);
  kv.set("start_noise", start_noise);
  kv.set("reward_free", reward_free);
  return kv;
}

EnvConfig EnvConfig::from_kv(const KeyValues& kv) {
  EnvConfig c;
  c.maze = parse_maze(kv.get("maze"));
  c.dt = kv.get_double("dt");
  c.drag = kv.get_double("drag");
  c.horizon = static_cast<int>(kv.get_int("H"));
  c.goal_radius = kv.get_double("goal_radius");
  c.start_noise = kv.get_double("start_noise");
  c.reward_free = kv.get_bool("reward_free");
  c.validate();
  return c;
}

PointMassEnv::PointMassEnv(EnvConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  walls_ = maze_info(cfg_.maze).walls;
  goal_ = maze_info(cfg_.maze).goal;
}

Vec4 PointMassEnv::reset(Rng& rng) {
  std::uniform_real_distribution<double> u(-cfg_.start_noise, cfg_.start_noise);
  Vec4 s = Vec4::Zero();
  s.head<2>() = maze_info(cfg_.maze).start;
  s(0) += u(rng);
  s(1) += u(rng);
  return reset(s);
}

Vec4 PointMassEnv::reset(const Vec4& state) {
  if (!state.allFinite()) throw ContractError("reset: non-finite state");
  state_ = state;
  t_ = 0;
  done_ = false;
  return state_;
}

Vec4 PointMassEnv::transition(const Vec4& s, const Vec2& action) const {
  const Vec2 a = action.cwiseMax(-1.0).cwiseMin(1.0);
  Vec2 v = (1.0 - cfg_.drag) * s.tail<2>() + cfg_.dt * a;
  bool hit = false;
  const double x = sweep(s(0), s(0) + cfg_.dt * v(0), s(1), 0, walls_, &hit);
  if (hit) v(0) = 0.0;
  const double y = sweep(s(1), s(1) + cfg_.dt * v(1), x, 1, walls_, &hit);
  if (hit) v(1) = 0.0;
  return {x, y, v(0), v(1)};
}

StepResult PointMassEnv::step(const Vec2& action) {
  if (done_) throw StateError("step called after the episode ended; call reset first");
  if (!action.allFinite()) throw ContractError("step: non-finite action");
  state_ = transition(state_, action);
  ++t_;
  StepResult r;
  r.state = state_;
  const double dist = (position_of(state_) - goal_).norm();
  if (!cfg_.reward_free) {
    r.reward = -dist;
    r.reached = dist < cfg_.goal_radius;
  }
  r.done = r.reached || t_ >= cfg_.horizon;
  done_ = r.done;
  return r;
}

WaypointExpert::WaypointExpert(std::vector<Vec2> route, double switch_radius)
    : route_(std::move(route)), radius_(switch_radius) {
  if (route_.empty()) throw ContractError("expert route is empty");
}

Vec2 WaypointExpert::act(const Vec4& s) {
  const Vec2 p = position_of(s);
  while (next_ + 1 < route_.size() && (route_[next_] - p).norm() < radius_) ++next_;
  const Vec2 a = kP * (route_[next_] - p) - kD * s.tail<2>();
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

}  // namespace nfrl
