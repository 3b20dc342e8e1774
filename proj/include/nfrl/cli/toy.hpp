// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "nfrl/objectives/objectives.hpp"

namespace nfrl {

/// Builtin 2-D data sets: "two-gaussians" (means +-(2, 0), unit covariance,
/// equal weights), "two-moons" (noise 0.05) and "delta" (every row (0.3, -0.2)).
Mat sample_toy_density(const std::string& name, int n, Rng& rng);

/// Builtin unnormalised targets: "gaussian" (N((3, -2), I)) and "ring"
/// (log p = -4 (|x| - 2)^2).
ViTarget toy_vi_target(const std::string& name);

}  // namespace nfrl
