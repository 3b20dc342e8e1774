// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nfrl/kv.hpp"
#include "nfrl/types.hpp"

namespace nfrl {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;

inline constexpr int kStateDim = 4;   ///< x, y, vx, vy
inline constexpr int kActionDim = 2;  ///< acceleration
inline constexpr int kGoalDim = 2;    ///< goals live in position space

enum class MazeId { open, u_maze, big_maze, two_rooms };

MazeId parse_maze(const std::string& name);
std::string to_string(MazeId m);

/// Axis-aligned zero-thickness wall from (x0, y0) to (x1, y1).
struct Wall {
  double x0, y0, x1, y1;
  bool vertical() const noexcept { return x0 == x1; }
};

/// Layout plus the scripted routes (one waypoint list per mode; the last
/// waypoint of every route is the task goal).
struct MazeInfo {
  std::vector<Wall> walls;
  Vec2 start;
  Vec2 goal;
  int horizon = 200;
  std::vector<std::vector<Vec2>> routes;
};

const MazeInfo& maze_info(MazeId m);

struct EnvConfig {
  MazeId maze = MazeId::open;
  double dt = 0.05;
  double drag = 0.1;  ///< fraction of velocity removed per step
  int horizon = 200;
  double goal_radius = 0.05;
  double start_noise = 0.03;  ///< start position jitter, uniform per axis
  bool reward_free = false;   ///< zero reward, episodes end only at the horizon

  /// Config with the maze's own horizon.
  static EnvConfig for_maze(MazeId m);
  void validate() const;
  KeyValues to_kv() const;
  static EnvConfig from_kv(const KeyValues& kv);
};

/// Distance kept between a body and any wall it is pushed against.
inline constexpr double kWallMargin = 1e-6;

struct StepResult {
  Vec4 state;
  double reward = 0.0;
  bool done = false;
  bool reached = false;
};

inline Vec2 position_of(const Vec4& s) { return s.head<2>(); }

class PointMassEnv {
 public:
  explicit PointMassEnv(EnvConfig cfg = {});

  Vec4 reset(Rng& rng);
  Vec4 reset(const Vec4& state);
  /// Throws StateError once the episode is over and ContractError for a
  /// non-finite action.
  StepResult step(const Vec2& action);

  /// Deterministic transition without touching the episode state.
  Vec4 transition(const Vec4& s, const Vec2& action) const;

  const Vec4& state() const noexcept { return state_; }
  int t() const noexcept { return t_; }
  bool done() const noexcept { return done_; }
  const Vec2& goal() const noexcept { return goal_; }
  void set_goal(const Vec2& g) { goal_ = g; }
  const std::vector<Wall>& walls() const noexcept { return walls_; }
  const EnvConfig& config() const noexcept { return cfg_; }

 private:
  EnvConfig cfg_;
  std::vector<Wall> walls_;
  Vec2 goal_;
  Vec4 state_ = Vec4::Zero();
  int t_ = 0;
  bool done_ = true;
};

/// PD waypoint follower used to script demonstrations.
class WaypointExpert {
 public:
  explicit WaypointExpert(std::vector<Vec2> route, double switch_radius = 0.05);
  Vec2 act(const Vec4& s);
  std::size_t next_waypoint() const noexcept { return next_; }

  static constexpr double kP = 10.0;
  static constexpr double kD = 3.0;

 private:
  std::vector<Vec2> route_;
  double radius_;
  std::size_t next_ = 0;
};

}  // namespace nfrl
