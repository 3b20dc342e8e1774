// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/grad/adam.hpp"

#include <cmath>
#include <iostream>

#include "nfrl/errors.hpp"

namespace nfrl {

Adam::Adam(std::size_t num_params, AdamConfig cfg)
    : cfg_(cfg), m_(num_params, 0.0), v_(num_params, 0.0) {}

bool Adam::step(ParamStore& params, std::span<const double> grads) {
  if (grads.size() != params.size() || m_.size() != params.size()) {
    throw ContractError("adam: gradient/parameter/moment size mismatch");
  }
  for (double g : grads) {
    if (!std::isfinite(g)) {
      ++skipped_;
      const std::string msg = "adam: non-finite gradient, step skipped";
      if (warn_) {
        warn_(msg);
      } else {
        std::clog << "warning: " << msg << '\n';
      }
      return false;
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  auto& p = params.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i] * grads[i];
    p[i] -= cfg_.lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
  }
  return true;
}

}  // namespace nfrl
