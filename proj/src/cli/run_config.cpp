// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/cli/run_config.hpp"

#include <functional>
#include <map>

#include "nfrl/envs/point_mass.hpp"
#include "nfrl/errors.hpp"

namespace nfrl {
namespace {

[[noreturn]] void bad_field(const std::string& field, const std::string& why) {
  throw ConfigError("field '" + field + "': " + why);
}

using Setter = std::function<void(RunConfig&, const KeyValues&, const std::string&)>;

template <typename T>
Setter number(T RunConfig::*member) {
  return [member](RunConfig& c, const KeyValues& kv, const std::string& key) {
    try {
      if constexpr (std::is_same_v<T, double>) {
        c.*member = kv.get_double(key);
      } else if constexpr (std::is_same_v<T, bool>) {
        c.*member = kv.get_bool(key);
      } else {
        c.*member = static_cast<T>(kv.get_int(key));
      }
    } catch (const FormatError& e) {
      bad_field(key, e.what());
    }
  };
}

Setter text(std::string RunConfig::*member) {
  return [member](RunConfig& c, const KeyValues& kv, const std::string& key) { c.*member = kv.get(key); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"name", text(&RunConfig::name)},
      {"dataset", text(&RunConfig::dataset)},
      {"maze", text(&RunConfig::maze)},
      {"blocks", number(&RunConfig::blocks)},
      {"channels", number(&RunConfig::channels)},
      {"rep_dims", number(&RunConfig::rep_dims)},
      {"encoder_layers", number(&RunConfig::encoder_layers)},
      {"encoder_width", number(&RunConfig::encoder_width)},
      {"coupling_layers", number(&RunConfig::coupling_layers)},
      {"activation", text(&RunConfig::activation)},
      {"lr", number(&RunConfig::lr)},
      {"batch", number(&RunConfig::batch)},
      {"steps", number(&RunConfig::steps)},
      {"noise_std", number(&RunConfig::noise_std)},
      {"n_samples", number(&RunConfig::n_samples)},
      {"alpha_bc", number(&RunConfig::alpha_bc)},
      {"lambda_ent", number(&RunConfig::lambda_ent)},
      {"gamma", number(&RunConfig::gamma)},
      {"gamma_fut", number(&RunConfig::gamma_fut)},
      {"tau", number(&RunConfig::tau)},
      {"twin_critic", number(&RunConfig::twin_critic)},
      {"critic_width", number(&RunConfig::critic_width)},
      {"critic_layers", number(&RunConfig::critic_layers)},
      {"mask_prob", number(&RunConfig::mask_prob)},
      {"candidates", number(&RunConfig::candidates)},
      {"goal_noise_std", number(&RunConfig::goal_noise_std)},
      {"updates_per_episode", number(&RunConfig::updates_per_episode)},
      {"goal_selection", text(&RunConfig::goal_selection)},
      {"coverage_bins", number(&RunConfig::coverage_bins)},
      {"eval_every", number(&RunConfig::eval_every)},
      {"eval_episodes", number(&RunConfig::eval_episodes)},
      {"denoise", number(&RunConfig::denoise)},
      {"workers", number(&RunConfig::workers)},
      {"log_every", number(&RunConfig::log_every)},
      {"checkpoint_every", number(&RunConfig::checkpoint_every)},
  };
  return table;
}

}  // namespace

Algo parse_algo(const std::string& name) {
  if (name == "density-mle") return Algo::density_mle;
  if (name == "density-vi") return Algo::density_vi;
  if (name == "bc") return Algo::bc;
  if (name == "gcbc") return Algo::gcbc;
  if (name == "rlbc") return Algo::rlbc;
  if (name == "ugs") return Algo::ugs;
  bad_field("algo", "unknown algorithm '" + name + "' (density-mle, density-vi, bc, gcbc, rlbc, ugs)");
}

std::string to_string(Algo a) {
  switch (a) {
    case Algo::density_mle: return "density-mle";
    case Algo::density_vi: return "density-vi";
    case Algo::bc: return "bc";
    case Algo::gcbc: return "gcbc";
    case Algo::rlbc: return "rlbc";
    case Algo::ugs: return "ugs";
  }
  return "?";
}

RunConfig RunConfig::defaults(Algo a) {
  RunConfig c;
  c.algo = a;
  switch (a) {
    case Algo::bc:
    case Algo::density_mle:
    case Algo::density_vi:
      c.blocks = 12;
      break;
    case Algo::gcbc:
    case Algo::rlbc:
    case Algo::ugs:
      c.blocks = 6;
      break;
  }
  if (a == Algo::density_mle) c.dataset = "two-gaussians";
  if (a == Algo::density_vi) c.dataset = "gaussian";
  return c;
}

RunConfig RunConfig::from_kv(const KeyValues& kv) {
  RunConfig c = defaults(kv.has("algo") ? parse_algo(kv.get("algo")) : Algo::bc);
  for (const auto& key : kv.keys()) {
    if (key == "algo" || key == "version") continue;
    if (key == "seed") {
      try {
        c.seed = std::stoull(kv.get(key));
      } catch (const std::exception&) {
        bad_field("seed", "expected a non-negative integer, got '" + kv.get(key) + "'");
      }
      continue;
    }
    const auto it = setters().find(key);
    if (it == setters().end()) bad_field(key, "unknown key");
    it->second(c, kv, key);
  }
  if (c.dataset == "-") c.dataset.clear();
  c.validate();
  return c;
}

KeyValues RunConfig::to_kv() const {
  KeyValues kv;
  kv.set("algo", to_string(algo));
  kv.set("name", run_name());
  kv.set("dataset", dataset.empty() ? std::string("-") : dataset);
  kv.set("maze", maze);
  kv.set("blocks", blocks);
  kv.set("channels", channels);
  kv.set("rep_dims", rep_dims);
  kv.set("encoder_layers", encoder_layers);
  kv.set("encoder_width", encoder_width);
  kv.set("coupling_layers", coupling_layers);
  kv.set("activation", activation);
  kv.set("lr", lr);
  kv.set("batch", batch);
  kv.set("steps", steps);
  kv.set("noise_std", noise_std);
  kv.set("n_samples", n_samples);
  kv.set("alpha_bc", alpha_bc);
  kv.set("lambda_ent", lambda_ent);
  kv.set("gamma", gamma);
  kv.set("gamma_fut", gamma_fut);
  kv.set("tau", tau);
  kv.set("twin_critic", twin_critic);
  kv.set("critic_width", critic_width);
  kv.set("critic_layers", critic_layers);
  kv.set("mask_prob", mask_prob);
  kv.set("candidates", candidates);
  kv.set("goal_noise_std", goal_noise_std);
  kv.set("updates_per_episode", updates_per_episode);
  kv.set("goal_selection", goal_selection);
  kv.set("coverage_bins", coverage_bins);
  kv.set("eval_every", eval_every);
  kv.set("eval_episodes", eval_episodes);
  kv.set("denoise", denoise);
  kv.set("workers", workers);
  kv.set("log_every", log_every);
  kv.set("checkpoint_every", checkpoint_every);
  kv.set("seed", std::to_string(seed));
  return kv;
}

void RunConfig::validate() const {
  auto positive = [](const char* f, double v) {
    if (!(v > 0.0)) bad_field(f, "must be > 0");
  };
  auto unit = [](const char* f, double v, bool open_top) {
    if (!(v >= 0.0 && (open_top ? v < 1.0 : v <= 1.0))) {
      bad_field(f, open_top ? "must lie in [0, 1)" : "must lie in [0, 1]");
    }
  };
  positive("blocks", blocks);
  positive("channels", channels);
  positive("rep_dims", rep_dims);
  if (encoder_layers < 0) bad_field("encoder_layers", "must be >= 0");
  positive("encoder_width", encoder_width);
  if (coupling_layers < 0) bad_field("coupling_layers", "must be >= 0");
  try {
    parse_activation(activation);
  } catch (const Error& e) {
    bad_field("activation", e.what());
  }
  positive("lr", lr);
  positive("batch", batch);
  if (steps < 0) bad_field("steps", "must be >= 0");
  if (!(noise_std >= 0.0)) bad_field("noise_std", "must be >= 0");
  positive("n_samples", n_samples);
  if (!(alpha_bc >= 0.0)) bad_field("alpha_bc", "must be >= 0");
  if (!(lambda_ent >= 0.0)) bad_field("lambda_ent", "must be >= 0");
  unit("gamma", gamma, true);
  if (!(gamma_fut > 0.0 && gamma_fut < 1.0)) bad_field("gamma_fut", "must lie in (0, 1)");
  unit("tau", tau, false);
  positive("critic_width", critic_width);
  if (critic_layers < 0) bad_field("critic_layers", "must be >= 0");
  unit("mask_prob", mask_prob, false);
  positive("candidates", candidates);
  if (!(goal_noise_std >= 0.0)) bad_field("goal_noise_std", "must be >= 0");
  positive("updates_per_episode", updates_per_episode);
  if (goal_selection != "min_density" && goal_selection != "uniform") {
    bad_field("goal_selection", "expected min_density or uniform");
  }
  positive("coverage_bins", coverage_bins);
  positive("eval_every", static_cast<double>(eval_every));
  if (eval_episodes < 0) bad_field("eval_episodes", "must be >= 0");
  positive("workers", workers);
  positive("log_every", static_cast<double>(log_every));
  positive("checkpoint_every", static_cast<double>(checkpoint_every));
  try {
    parse_maze(maze);
  } catch (const Error& e) {
    bad_field("maze", e.what());
  }
  if ((algo == Algo::bc || algo == Algo::gcbc || algo == Algo::rlbc) && dataset.empty()) {
    bad_field("dataset", "a dataset file is required for " + to_string(algo));
  }
}

std::string RunConfig::run_name() const {
  return name.empty() ? to_string(algo) + "-s" + std::to_string(seed) : name;
}

FlowSpec RunConfig::flow_spec(int dim, int cond_dim) const {
  FlowSpec s;
  s.dim = dim;
  s.cond_dim = cond_dim;
  s.rep_dim = rep_dims;
  s.blocks = blocks;
  s.channels = channels;
  s.coupling_layers = coupling_layers;
  s.encoder_layers = encoder_layers;
  s.encoder_width = encoder_width;
  s.activation = parse_activation(activation);
  s.seed = seed;
  s.validate();
  return s;
}

}  // namespace nfrl
