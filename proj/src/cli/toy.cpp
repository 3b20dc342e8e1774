// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/cli/toy.hpp"

#include <cmath>
#include <numbers>

#include "nfrl/errors.hpp"

namespace nfrl {

Mat sample_toy_density(const std::string& name, int n, Rng& rng) {
  if (n < 0) throw ContractError("toy data: negative sample count");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  Mat x(n, 2);
  if (name == "two-gaussians") {
    for (int i = 0; i < n; ++i) {
      const double sign = u(rng) < 0.5 ? -1.0 : 1.0;
      x(i, 0) = 2.0 * sign + g(rng);
      x(i, 1) = g(rng);
    }
  } else if (name == "two-moons") {
    for (int i = 0; i < n; ++i) {
      const double t = std::numbers::pi * u(rng);
      if (u(rng) < 0.5) {
        x(i, 0) = std::cos(t);
        x(i, 1) = std::sin(t);
      } else {
        x(i, 0) = 1.0 - std::cos(t);
        x(i, 1) = 0.5 - std::sin(t);
      }
      x(i, 0) += 0.05 * g(rng);
      x(i, 1) += 0.05 * g(rng);
    }
  } else if (name == "delta") {
    x.col(0).setConstant(0.3);
    x.col(1).setConstant(-0.2);
  } else {
    throw ConfigError("field 'dataset': unknown builtin density '" + name +
                      "' (two-gaussians, two-moons, delta)");
  }
  return x;
}

ViTarget toy_vi_target(const std::string& name) {
  if (name == "gaussian") {
    return {2, [](const Mat& x, Vec& lp, Mat& grad) {
              Mat d = x;
              d.col(0).array() -= 3.0;
              d.col(1).array() += 2.0;
              lp = -0.5 * d.rowwise().squaredNorm();
              grad = -d;
            }};
  }
  if (name == "ring") {
    return {2, [](const Mat& x, Vec& lp, Mat& grad) {
              lp.resize(x.rows());
              grad.resize(x.rows(), 2);
              for (Eigen::Index i = 0; i < x.rows(); ++i) {
                const double r = std::max(x.row(i).norm(), 1e-12);
                lp(i) = -4.0 * (r - 2.0) * (r - 2.0);
                grad.row(i) = -8.0 * (r - 2.0) / r * x.row(i);
              }
            }};
  }
  throw ConfigError("field 'dataset': unknown builtin target '" + name + "' (gaussian, ring)");
}

}  // namespace nfrl
