// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "nfrl/grad/param_store.hpp"

namespace nfrl {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments are sized to one ParamStore.
class Adam {
 public:
  using WarningSink = std::function<void(const std::string&)>;

  Adam() = default;
  Adam(std::size_t num_params, AdamConfig cfg);

  /// Applies one update. A gradient containing NaN/inf skips the step,
  /// reports through the warning sink and returns false.
  bool step(ParamStore& params, std::span<const double> grads);

  AdamConfig& config() noexcept { return cfg_; }
  std::int64_t steps() const noexcept { return t_; }
  std::int64_t skipped() const noexcept { return skipped_; }
  void set_warning_sink(WarningSink sink) { warn_ = std::move(sink); }

 private:
  AdamConfig cfg_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
  std::int64_t skipped_ = 0;
  WarningSink warn_;
};

}  // namespace nfrl
