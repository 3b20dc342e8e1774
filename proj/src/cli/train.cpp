// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include "nfrl/cli/train.hpp"

#include <chrono>
#include <cstdlib>
#include <ostream>
#include <random>

#include "nfrl/algos/critic.hpp"
#include "nfrl/algos/policy.hpp"
#include "nfrl/algos/updates.hpp"
#include "nfrl/cli/toy.hpp"
#include "nfrl/envs/dataset.hpp"
#include "nfrl/errors.hpp"
#include "nfrl/grad/adam.hpp"
#include "nfrl/grad/checkpoint.hpp"
#include "nfrl/objectives/objectives.hpp"
#include "nfrl/version.hpp"

namespace fs = std::filesystem;

namespace nfrl {
namespace {

constexpr int kHeldOut = 4096;

Rng stream(std::uint64_t seed, std::uint64_t k) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(k)};
  return Rng(seq);
}

KeyValues record(long long step, const char* kind) {
  KeyValues kv;
  kv.set("step", step);
  kv.set("kind", std::string(kind));
  return kv;
}

void add_eval(KeyValues& kv, const EvalStats& st) {
  kv.set("episodes", static_cast<long long>(st.episodes));
  kv.set("success_rate", st.success_rate);
  kv.set("mean_return", st.mean_return);
  kv.set("std_return", st.std_return);
  kv.set("mean_length", st.mean_length);
}

std::vector<int> critic_hidden(const RunConfig& cfg) {
  return std::vector<int>(static_cast<std::size_t>(cfg.critic_layers), cfg.critic_width);
}

class Driver {
 public:
  Driver(const RunConfig& cfg, RunDir& dir, std::ostream* progress)
      : cfg_(cfg), dir_(dir), progress_(progress), t0_(std::chrono::steady_clock::now()) {}

  bool log_due(long long step) const { return step % cfg_.log_every == 0 || step == cfg_.steps; }
  bool eval_due(long long step) const { return step % cfg_.eval_every == 0 || step == cfg_.steps; }
  bool ckpt_due(long long step) const {
    return step % cfg_.checkpoint_every == 0 || step == cfg_.steps;
  }

  void emit(const KeyValues& kv, long long step) {
    dir_.log_metrics(kv);
    dir_.log_timing(step, wall_ms());
    if (progress_) *progress_ << kv.to_line() << '\n';
    if (kv.get("kind") == "eval") {
      result.last_eval = kv;
    } else {
      result.last_metrics = kv;
    }
  }

  double wall_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count();
  }

  KeyValues arch(const char* role, const char* context, const std::string& maze) const {
    KeyValues kv;
    kv.set("role", std::string(role));
    kv.set("context", std::string(context));
    kv.set("algo", to_string(cfg_.algo));
    kv.set("maze", maze);
    kv.set("noise_std", cfg_.noise_std);
    return kv;
  }

  TrainResult result;

 private:
  const RunConfig& cfg_;
  RunDir& dir_;
  std::ostream* progress_;
  std::chrono::steady_clock::time_point t0_;
};

// Saves the current parameters when a step blows up, then rethrows.
template <typename Body, typename Rescue>
void guarded(Body&& body, Rescue&& rescue) {
  try {
    body();
  } catch (const NumericError&) {
    rescue();
    throw;
  }
}

void run_density_mle(const RunConfig& cfg, RunDir& dir, Driver& drv) {
  Rng data_rng = stream(cfg.seed, 1);
  const Mat data = sample_toy_density(cfg.dataset, cfg.n_samples, data_rng);
  const Mat held = sample_toy_density(cfg.dataset, kHeldOut, data_rng);
  FlowModel model(cfg.flow_spec(2, 0));
  Adam opt(model.params().size(), AdamConfig{cfg.lr});
  Rng rng = stream(cfg.seed, 2);
  const KeyValues arch = drv.arch("density", "none", "-");
  dir.save_flow("model", model, 0, arch);
  std::uniform_int_distribution<Eigen::Index> pick(0, data.rows() - 1);
  for (long long step = 1; step <= cfg.steps; ++step) {
    Mat x(cfg.batch, 2);
    for (int i = 0; i < cfg.batch; ++i) x.row(i) = data.row(pick(rng));
    double loss = 0.0;
    guarded([&] { loss = mle_update(model, opt, {x, CondBatch::none(cfg.batch), cfg.noise_std}, rng); },
            [&] { dir.save_flow("model-last_good", model, step - 1, arch); });
    if (drv.log_due(step)) {
      KeyValues kv = record(step, "train");
      kv.set("loss", loss);
      drv.emit(kv, step);
    }
    if (drv.eval_due(step)) {
      KeyValues kv = record(step, "eval");
      kv.set("heldout_nll", -model.log_prob(held, CondBatch::none(held.rows())).mean());
      drv.emit(kv, step);
    }
    if (drv.ckpt_due(step)) dir.save_flow("model", model, step, arch);
  }
}

void run_density_vi(const RunConfig& cfg, RunDir& dir, Driver& drv) {
  const ViTarget target = toy_vi_target(cfg.dataset);
  FlowModel model(cfg.flow_spec(target.dim, 0));
  Adam opt(model.params().size(), AdamConfig{cfg.lr});
  Rng rng = stream(cfg.seed, 2);
  Rng eval_rng = stream(cfg.seed, 3);
  const KeyValues arch = drv.arch("density", "none", "-");
  dir.save_flow("model", model, 0, arch);
  for (long long step = 1; step <= cfg.steps; ++step) {
    double loss = 0.0;
    guarded([&] { loss = vi_update(model, opt, target, cfg.batch, rng); },
            [&] { dir.save_flow("model-last_good", model, step - 1, arch); });
    if (drv.log_due(step)) {
      KeyValues kv = record(step, "train");
      kv.set("loss", loss);
      drv.emit(kv, step);
    }
    if (drv.eval_due(step)) {
      Tape tape;
      tape.freeze(model.params());
      const Var l = vi_loss(model, target, kHeldOut, tape, eval_rng);
      const Mat x = model.sample(CondBatch::none(kHeldOut), eval_rng);
      KeyValues kv = record(step, "eval");
      kv.set("kl_plus_logz", tape.value(l)(0, 0));
      kv.set("mean_x", x.col(0).mean());
      kv.set("mean_y", x.col(1).mean());
      drv.emit(kv, step);
    }
    if (drv.ckpt_due(step)) dir.save_flow("model", model, step, arch);
  }
}

void run_imitation(const RunConfig& cfg, RunDir& dir, Driver& drv) {
  const Dataset ds = load_dataset(cfg.dataset);
  ReplayBuffer buffer(ds.trajectories.size());
  for (const auto& tr : ds.trajectories) buffer.add(tr);
  const bool goal_cond = cfg.algo == Algo::gcbc;
  FlowModel actor(cfg.flow_spec(kActionDim, goal_cond ? kStateDim + kGoalDim : kStateDim));
  Adam opt(actor.params().size(), AdamConfig{cfg.lr});
  Rng rng = stream(cfg.seed, 2);
  const KeyValues arch = drv.arch("actor", goal_cond ? "state_goal" : "state", to_string(ds.env.maze));
  const std::optional<Vec2> goal =
      goal_cond ? std::optional<Vec2>(maze_info(ds.env.maze).goal) : std::nullopt;
  dir.save_flow("actor", actor, 0, arch);
  for (long long step = 1; step <= cfg.steps; ++step) {
    double loss = 0.0;
    guarded(
        [&] {
          loss = goal_cond ? gcbc_update(actor, opt, buffer, cfg.batch, cfg.gamma_fut, cfg.noise_std, rng)
                           : bc_update(actor, opt, buffer, cfg.batch, cfg.noise_std, rng);
        },
        [&] { dir.save_flow("actor-last_good", actor, step - 1, arch); });
    if (drv.log_due(step)) {
      KeyValues kv = record(step, "train");
      kv.set("loss", loss);
      drv.emit(kv, step);
    }
    if (cfg.eval_episodes > 0 && drv.eval_due(step)) {
      const PolicyFactory make = [&](Rng& r) {
        return flow_policy(actor, r, goal, cfg.denoise, cfg.noise_std);
      };
      KeyValues kv = record(step, "eval");
      add_eval(kv, evaluate_episodes(ds.env, make, cfg.eval_episodes, cfg.seed + 7919ULL * step,
                                     cfg.workers, goal));
      drv.emit(kv, step);
    }
    if (drv.ckpt_due(step)) dir.save_flow("actor", actor, step, arch);
  }
}

void run_rlbc(const RunConfig& cfg, RunDir& dir, Driver& drv) {
  const Dataset ds = load_dataset(cfg.dataset);
  ReplayBuffer buffer(ds.trajectories.size());
  for (const auto& tr : ds.trajectories) buffer.add(tr);
  FlowModel actor(cfg.flow_spec(kActionDim, kStateDim));
  CriticConfig ccfg;
  ccfg.hidden = critic_hidden(cfg);
  ccfg.tau = cfg.tau;
  ccfg.twin = cfg.twin_critic;
  ccfg.activation = parse_activation(cfg.activation);
  Critic critic(ccfg, cfg.seed + 1);
  Adam aopt(actor.params().size(), AdamConfig{cfg.lr});
  Adam copt(critic.online().size(), AdamConfig{cfg.lr});
  Rng rng = stream(cfg.seed, 2);
  const ActorLossWeights w{cfg.lambda_ent, cfg.alpha_bc, cfg.noise_std};
  const KeyValues arch = drv.arch("actor", "state", to_string(ds.env.maze));
  KeyValues carch = drv.arch("critic", "state_action", to_string(ds.env.maze));
  carch.set("hidden", std::to_string(cfg.critic_layers) + "x" + std::to_string(cfg.critic_width));
  carch.set("twin", cfg.twin_critic);
  auto save = [&](const std::string& suffix, long long step) {
    dir.save_flow("actor" + suffix, actor, step, arch);
    dir.save_store("critic" + suffix, critic.online(), step, carch);
  };
  save("", 0);
  const QFn q = critic_q(critic);
  for (long long step = 1; step <= cfg.steps; ++step) {
    CriticMetrics cm;
    ActorMetrics am;
    guarded(
        [&] {
          const TransitionBatch b = buffer.sample_batch(cfg.batch, rng);
          cm = critic_update(critic, copt, td_batch(b), flow_sampler(actor), cfg.gamma, rng);
          am = actor_update(actor, aopt, q, b.s, b.a, w, rng);
        },
        [&] { save("-last_good", step - 1); });
    if (drv.log_due(step)) {
      KeyValues kv = record(step, "train");
      kv.set("critic_loss", cm.loss);
      kv.set("actor_loss", am.loss);
      kv.set("q_pi", am.q_pi);
      kv.set("log_pi_data", am.log_pi_data);
      drv.emit(kv, step);
    }
    if (cfg.eval_episodes > 0 && drv.eval_due(step)) {
      const PolicyFactory make = [&](Rng& r) { return flow_policy(actor, r); };
      KeyValues kv = record(step, "eval");
      add_eval(kv, evaluate_episodes(ds.env, make, cfg.eval_episodes, cfg.seed + 7919ULL * step,
                                     cfg.workers));
      drv.emit(kv, step);
    }
    if (drv.ckpt_due(step)) save("", step);
  }
}

void run_ugs(const RunConfig& cfg, RunDir& dir, Driver& drv) {
  EnvConfig env_cfg = EnvConfig::for_maze(parse_maze(cfg.maze));
  env_cfg.reward_free = true;
  PointMassEnv env(env_cfg);
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.steps / cfg.updates_per_episode + 2));
  FlowModel actor(cfg.flow_spec(kActionDim, kStateDim + kGoalDim));
  FlowSpec jspec = cfg.flow_spec(kGoalDim, kStateDim + kActionDim);
  jspec.seed = cfg.seed + 1;
  UgsState ugs{FlowModel(jspec),
               UgsConfig{cfg.candidates, cfg.goal_noise_std, cfg.gamma, cfg.mask_prob,
                         cfg.updates_per_episode}};
  Adam aopt(actor.params().size(), AdamConfig{cfg.lr});
  Adam jopt(ugs.joint.params().size(), AdamConfig{cfg.lr});
  Rng rng = stream(cfg.seed, 2);
  const KeyValues arch = drv.arch("actor", "state_goal", cfg.maze);
  const KeyValues jarch = drv.arch("joint", "state_action", cfg.maze);
  auto save = [&](const std::string& suffix, long long step) {
    dir.save_flow("actor" + suffix, actor, step, arch);
    dir.save_flow("joint" + suffix, ugs.joint, step, jarch);
  };
  save("", 0);
  const bool min_density = cfg.goal_selection == "min_density";
  const WarningSink quiet = [](const std::string&) {};
  long long step = 0;
  long long next_ckpt = cfg.checkpoint_every;
  int episode = 0;
  while (step < cfg.steps || episode == 0) {
    GoalPick pick;
    Trajectory tr;
    if (buffer.size() == 0) {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      tr = rollout(env, [&](const Vec4&, int) { return Vec2(u(rng), u(rng)); }, rng, episode);
    } else {
      if (min_density) {
        pick = select_ugs_goal(ugs, buffer, rng, quiet);
      } else {
        pick.goal = buffer.random_goals(1, rng).row(0).transpose();
      }
      env.set_goal(pick.goal);
      tr = rollout(env, flow_policy(actor, rng, pick.goal), rng, episode);
    }
    buffer.add(std::move(tr));
    double qloss = 0.0, aloss = 0.0;
    const long long start = step;
    guarded(
        [&] {
          for (int k = 0; k < cfg.updates_per_episode && step < cfg.steps; ++k) {
            const TransitionBatch b = buffer.sample_batch(cfg.batch, rng, cfg.gamma);
            qloss = gcrl_q_update(ugs, jopt, b.s, b.a, b.g, rng);
            aloss = gcrl_actor_update(actor, aopt, ugs.joint, b.s, b.g, rng);
            ++step;
          }
        },
        [&] { save("-last_good", step); });
    KeyValues kv = record(step, "train");
    kv.set("episode", static_cast<long long>(episode));
    kv.set("q_loss", qloss);
    kv.set("actor_loss", aloss);
    kv.set("goal_x", pick.goal(0));
    kv.set("goal_y", pick.goal(1));
    kv.set("fallback", pick.fallback);
    kv.set("coverage_entropy", coverage_entropy(buffer, cfg.coverage_bins));
    kv.set("num_states", static_cast<long long>(buffer.num_states()));
    drv.emit(kv, step);
    ++episode;
    if (step >= next_ckpt || (step == cfg.steps && step > start)) {
      save("", step);
      while (next_ckpt <= step) next_ckpt += cfg.checkpoint_every;
    }
  }
}

}  // namespace

fs::path resolve_run_root(const std::string& explicit_root) {
  if (!explicit_root.empty()) return explicit_root;
  if (const char* env = std::getenv("NFRL_RUN_DIR"); env && *env) return env;
  return "runs";
}

RunDir::RunDir(const fs::path& root, const std::string& name) : dir_(root / name) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create run directory " + dir_.string() + ": " + ec.message());
  metrics_.open(dir_ / "metrics.txt", std::ios::trunc);
  timing_.open(dir_ / "timing.txt", std::ios::trunc);
  if (!metrics_ || !timing_) throw IoError("cannot open log files in " + dir_.string());
}

void RunDir::write_manifest(const RunConfig& cfg) {
  std::ofstream os(dir_ / "manifest.txt", std::ios::trunc);
  if (!os) throw IoError("cannot write manifest in " + dir_.string());
  os << "# nfrl run manifest\n";
  KeyValues kv = cfg.to_kv();
  kv.set("version", std::string(version_string()));
  os << kv.to_text();
}

void RunDir::log_metrics(const KeyValues& rec) {
  metrics_ << rec.to_line() << '\n';
  metrics_.flush();
}

void RunDir::log_timing(long long step, double wall_ms) {
  timing_ << "step=" << step << " wall_ms=" << format_double(wall_ms) << '\n';
  timing_.flush();
}

fs::path arch_path(const fs::path& ckpt) {
  fs::path p = ckpt;
  p.replace_extension(".arch");
  return p;
}

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw IoError("cannot write " + p.string());
  os << text;
}

}  // namespace

fs::path RunDir::save_store(const std::string& role, const ParamStore& store, long long step,
                            const KeyValues& arch) {
  KeyValues a = arch;
  a.set("step", step);
  const fs::path ckpt = dir_ / (role + "-step" + std::to_string(step) + ".ckpt");
  save_checkpoint(ckpt, store);
  write_text(arch_path(ckpt), a.to_text());
  const fs::path latest = dir_ / (role + "-latest.ckpt");
  save_checkpoint(latest, store);
  write_text(arch_path(latest), a.to_text());
  return ckpt;
}

fs::path RunDir::save_flow(const std::string& role, const FlowModel& model, long long step,
                           const KeyValues& extra) {
  KeyValues a = model.spec().to_kv();
  a.merge(extra);
  return save_store(role, model.params(), step, a);
}

FlowModel load_flow(const fs::path& ckpt, KeyValues* arch) {
  const fs::path ap = arch_path(ckpt);
  std::ifstream is(ap);
  if (!is) throw ConfigError("missing architecture file " + ap.string());
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  KeyValues kv;
  FlowSpec spec;
  try {
    kv = KeyValues::parse(text);
    spec = FlowSpec::from_kv(kv);
  } catch (const Error& e) {
    throw ConfigError("bad architecture file " + ap.string() + ": " + e.what());
  }
  FlowModel model(spec);
  ParamStore params = load_checkpoint(ckpt);
  if (!params.same_layout(model.params())) {
    throw ConfigError("checkpoint " + ckpt.string() + " does not match its architecture (T=" +
                      std::to_string(spec.blocks) + ", k=" + std::to_string(spec.rep_dim) + ")");
  }
  model.set_params(std::move(params));
  if (arch) *arch = kv;
  return model;
}

TrainResult run_training(const RunConfig& cfg, const fs::path& root, std::ostream* progress) {
  cfg.validate();
  RunDir dir(root, cfg.run_name());
  dir.write_manifest(cfg);
  Driver drv(cfg, dir, progress);
  switch (cfg.algo) {
    case Algo::density_mle: run_density_mle(cfg, dir, drv); break;
    case Algo::density_vi: run_density_vi(cfg, dir, drv); break;
    case Algo::bc:
    case Algo::gcbc: run_imitation(cfg, dir, drv); break;
    case Algo::rlbc: run_rlbc(cfg, dir, drv); break;
    case Algo::ugs: run_ugs(cfg, dir, drv); break;
  }
  drv.result.dir = dir.path();
  drv.result.steps = cfg.steps;
  return drv.result;
}

}  // namespace nfrl
