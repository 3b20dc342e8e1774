// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/grad/mlp.hpp"

#include <cmath>

#include "nfrl/errors.hpp"

namespace nfrl {

Activation parse_activation(std::string_view name) {
  if (name == "gelu") return Activation::gelu;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::gelu: return "gelu";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "gelu";
}

void MlpSpec::validate() const {
  if (in_dim < 1 || out_dim < 1) {
    throw ConfigError("mlp dims must be >= 1 (in=" + std::to_string(in_dim) +
                      ", out=" + std::to_string(out_dim) + ")");
  }
  for (int h : hidden_dims) {
    if (h < 1) throw ConfigError("mlp hidden dims must be >= 1");
  }
}

std::size_t MlpSpec::num_params() const {
  std::size_t n = 0;
  int in = in_dim;
  for (int h : hidden_dims) {
    n += static_cast<std::size_t>(h) * (in + 1);
    if (layernorm) n += 2 * static_cast<std::size_t>(h);
    in = h;
  }
  return n + static_cast<std::size_t>(out_dim) * (in + 1);
}

Mlp::Mlp(const MlpSpec& spec, ParamStore& store, const std::string& prefix)
    : spec_(spec), prefix_(prefix) {
  spec_.validate();
  int in = spec_.in_dim;
  const auto n_hidden = spec_.hidden_dims.size();
  for (std::size_t i = 0; i <= n_hidden; ++i) {
    Layer l;
    l.hidden = i < n_hidden;
    l.in = in;
    l.out = l.hidden ? spec_.hidden_dims[i] : spec_.out_dim;
    const std::string tag = prefix_ + ".l" + std::to_string(i);
    l.w = store.add(tag + ".w", static_cast<std::size_t>(l.out) * l.in).offset;
    l.b = store.add(tag + ".b", static_cast<std::size_t>(l.out)).offset;
    if (l.hidden && spec_.layernorm) {
      const std::string ln = prefix_ + ".ln" + std::to_string(i);
      l.ln_g = store.add(ln + ".g", static_cast<std::size_t>(l.out)).offset;
      l.ln_b = store.add(ln + ".b", static_cast<std::size_t>(l.out)).offset;
    }
    layers_.push_back(l);
    in = l.out;
  }
}

void Mlp::init(ParamStore& store, Rng& rng, bool zero_output) const {
  auto& v = store.values();
  for (const Layer& l : layers_) {
    const auto nw = static_cast<std::size_t>(l.out) * l.in;
    double bound = 0.0;
    if (l.hidden) {
      bound = std::sqrt(6.0 / l.in);
    } else if (!zero_output) {
      bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    }
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < nw; ++i) v[l.w + i] = bound > 0.0 ? u(rng) : 0.0;
    for (int i = 0; i < l.out; ++i) v[l.b + i] = 0.0;
    if (l.hidden && spec_.layernorm) {
      for (int i = 0; i < l.out; ++i) {
        v[l.ln_g + i] = 1.0;
        v[l.ln_b + i] = 0.0;
      }
    }
  }
}

Var Mlp::forward(Tape& tape, const ParamStore& store, Var x) const {
  if (tape.value(x).cols() != spec_.in_dim) {
    throw ContractError(prefix_ + ": expected input width " + std::to_string(spec_.in_dim) +
                        ", got " + std::to_string(tape.value(x).cols()));
  }
  Var h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Layer& l = layers_[i];
    Var w = tape.param(store, l.w, l.out, l.in);
    Var b = tape.param(store, l.b, 1, l.out);
    h = tape.affine(h, w, b);
    if (l.hidden) {
      if (spec_.layernorm) {
        h = tape.layer_norm(h, kLayerNormEps);
        h = tape.mul_row(h, tape.param(store, l.ln_g, 1, l.out));
        h = tape.add_row(h, tape.param(store, l.ln_b, 1, l.out));
      }
      switch (spec_.activation) {
        case Activation::gelu: h = tape.gelu(h); break;
        case Activation::relu: h = tape.relu(h); break;
        case Activation::tanh: h = tape.tanh(h); break;
      }
    }
    if (!tape.value(h).allFinite()) {
      throw NumericError(prefix_ + ".l" + std::to_string(i), "non-finite activation");
    }
  }
  return h;
}

Vec mlp_forward(const Mlp& mlp, const ParamStore& store, const Vec& x) {
  Tape tape;
  tape.freeze(store);
  Var in = tape.constant(x.transpose());
  return tape.value(mlp.forward(tape, store, in)).row(0).transpose();
}

}  // namespace nfrl
