// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "nfrl/grad/param_store.hpp"
#include "nfrl/grad/tape.hpp"
#include "nfrl/types.hpp"

namespace nfrl {

enum class Activation { gelu, relu, tanh };

Activation parse_activation(std::string_view name);
std::string_view to_string(Activation a);

struct MlpSpec {
  int in_dim = 1;
  std::vector<int> hidden_dims;
  int out_dim = 1;
  bool layernorm = true;
  Activation activation = Activation::gelu;

  /// Throws ConfigError unless every dimension is >= 1.
  void validate() const;
  std::size_t num_params() const;
};

/// Fully connected network whose weights live in a ParamStore.
///
/// Hidden layer i computes act(LN(W_i h + b_i) * gain_i + shift_i); the
/// output layer is plain affine. Slices are named "<prefix>.l<i>.w",
/// "<prefix>.l<i>.b", "<prefix>.ln<i>.g", "<prefix>.ln<i>.b".
class Mlp {
 public:
  static constexpr double kLayerNormEps = 1e-9;

  Mlp() = default;
  /// Registers this network's slices in `store`.
  Mlp(const MlpSpec& spec, ParamStore& store, const std::string& prefix);

  /// He-uniform hidden layers, unit LayerNorm gain. The output layer is
  /// zero when `zero_output`, otherwise uniform in +-1/sqrt(fan_in).
  void init(ParamStore& store, Rng& rng, bool zero_output) const;

  /// Batched forward; x is B x in_dim. Throws NumericError naming the
  /// layer on a non-finite activation.
  Var forward(Tape& tape, const ParamStore& store, Var x) const;

  const MlpSpec& spec() const noexcept { return spec_; }
  const std::string& prefix() const noexcept { return prefix_; }

 private:
  struct Layer {
    std::size_t w = 0, b = 0, ln_g = 0, ln_b = 0;
    int in = 0, out = 0;
    bool hidden = false;
  };

  MlpSpec spec_;
  std::string prefix_;
  std::vector<Layer> layers_;
};

/// Convenience single-vector evaluation (no gradients kept).
Vec mlp_forward(const Mlp& mlp, const ParamStore& store, const Vec& x);

}  // namespace nfrl
