// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0
//
// Small discrete chain with one-hot states and actions, plus exact
// dynamic-programming answers for it.

#pragma once

#include <algorithm>
#include <vector>

#include "nfrl/envs/dataset.hpp"
#include "nfrl/types.hpp"

namespace nfrl::testing {

struct Chain {
  int n = 5;
  double p_right = 0.7;  ///< behaviour/evaluation policy: P(right | s)

  int next(int s, int a) const { return a == 1 ? std::min(s + 1, n - 1) : std::max(s - 1, 0); }
  double reward(int s, int a) const { return next(s, a) == n - 1 ? 1.0 : 0.0; }

  Mat onehot_states(const std::vector<int>& s) const {
    Mat m = Mat::Zero(static_cast<Eigen::Index>(s.size()), n);
    for (std::size_t i = 0; i < s.size(); ++i) m(static_cast<Eigen::Index>(i), s[i]) = 1.0;
    return m;
  }
  static Mat onehot_actions(const std::vector<int>& a) {
    Mat m = Mat::Zero(static_cast<Eigen::Index>(a.size()), 2);
    for (std::size_t i = 0; i < a.size(); ++i) m(static_cast<Eigen::Index>(i), a[i]) = 1.0;
    return m;
  }
  /// Goal embedding of a state: points 0.5 apart on the x axis.
  static Vec2 embed(int s) { return {0.5 * s, 0.0}; }

  /// Q^pi(s, a) by value iteration; row s, column a.
  Mat q_dp(double gamma) const {
    Mat q = Mat::Zero(n, 2);
    for (int it = 0; it < 20000; ++it) {
      Mat nq(n, 2);
      for (int s = 0; s < n; ++s) {
        for (int a = 0; a < 2; ++a) {
          const int s2 = next(s, a);
          nq(s, a) = reward(s, a) + gamma * (p_right * q(s2, 1) + (1.0 - p_right) * q(s2, 0));
        }
      }
      const double diff = (nq - q).cwiseAbs().maxCoeff();
      q = nq;
      if (diff < 1e-14) break;
    }
    return q;
  }

  /// Exact discounted occupancy p(s_{t+k} = j | s_t = s, a_t = a) weighted
  /// (1 - gamma) gamma^(k-1) over k >= 1. Row j of the returned vector.
  Vec occupancy(int s, int a, double gamma) const {
    Mat p = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      p(i, next(i, 1)) += p_right;
      p(i, next(i, 0)) += 1.0 - p_right;
    }
    RowVec start = RowVec::Zero(n);
    start(next(s, a)) = 1.0;
    const Mat m = Mat::Identity(n, n) - gamma * p;
    const RowVec occ = (1.0 - gamma) * m.transpose().fullPivLu().solve(start.transpose()).transpose();
    return occ.transpose();
  }

  /// One long behaviour rollout of states and actions (states has len + 1 entries).
  void rollout(int len, Rng& rng, std::vector<int>& states, std::vector<int>& actions) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::uniform_int_distribution<int> start(0, n - 1);
    states.assign(1, start(rng));
    actions.clear();
    for (int t = 0; t < len; ++t) {
      const int a = u(rng) < p_right ? 1 : 0;
      actions.push_back(a);
      states.push_back(next(states.back(), a));
    }
  }
};

}  // namespace nfrl::testing
