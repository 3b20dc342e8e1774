// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "nfrl/algos/policy.hpp"
#include "nfrl/cli/checks.hpp"
#include "nfrl/cli/run_config.hpp"
#include "nfrl/cli/train.hpp"
#include "nfrl/envs/dataset.hpp"
#include "nfrl/errors.hpp"
#include "nfrl/version.hpp"

namespace fs = std::filesystem;
using namespace nfrl;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

std::string read_file(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw ConfigError("cannot read " + p.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string maze = "u_maze";
  std::string out;
  std::uint64_t seed = 0;
  ExpertDataConfig data;
  int horizon = 0;
};

int cmd_gen_data(const GenDataArgs& a) {
  EnvConfig env = EnvConfig::for_maze(parse_maze(a.maze));
  if (a.horizon > 0) env.horizon = a.horizon;
  ExpertDataConfig cfg = a.data;
  if (cfg.mode_mix.size() == 1 && maze_info(env.maze).routes.size() > 1 && a.data.mode_mix[0] == 1.0) {
    cfg.mode_mix.assign(maze_info(env.maze).routes.size(), 1.0 / maze_info(env.maze).routes.size());
  }
  const Dataset ds = generate_expert_dataset(env, cfg, a.seed);
  save_dataset(a.out, ds);
  std::cout << "wrote " << a.out << ": " << ds.trajectories.size() << " trajectories, "
            << ds.num_transitions() << " transitions, expert success " << ds.expert_success << '\n';
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::vector<std::string> configs;
  std::vector<std::string> sets;
  std::string algo, dataset, name, run_dir;
  long long steps = -1;
  long long seed = -1;
  bool quiet = false;
  bool single_critic = false;
};

KeyValues layered_config(const TrainArgs& a) {
  KeyValues kv;
  for (const auto& c : a.configs) kv.merge(KeyValues::parse(read_file(c)));
  if (!a.algo.empty()) kv.set("algo", a.algo);
  if (!a.dataset.empty()) kv.set("dataset", a.dataset);
  if (!a.name.empty()) kv.set("name", a.name);
  if (a.steps >= 0) kv.set("steps", a.steps);
  if (a.seed >= 0) kv.set("seed", a.seed);
  if (a.single_critic) kv.set("twin_critic", false);
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    kv.set(s.substr(0, eq), s.substr(eq + 1));
  }
  return kv;
}

int cmd_train(const TrainArgs& a) {
  KeyValues kv;
  try {
    kv = layered_config(a);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  const RunConfig cfg = RunConfig::from_kv(kv);
  const TrainResult r = run_training(cfg, resolve_run_root(a.run_dir), a.quiet ? nullptr : &std::cout);
  std::cout << "run directory: " << r.dir.string() << '\n';
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string checkpoint;
  std::string maze;
  std::string out;
  std::vector<double> goal;
  int episodes = 50;
  int workers = 1;
  int mode = 0;
  bool denoise = false;
  double sigma = -1.0;
  bool expert = false;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
  std::string maze = a.maze;
  FlowModel actor;
  KeyValues arch;
  if (!a.expert) {
    if (a.checkpoint.empty()) throw ConfigError("eval needs --checkpoint or --expert");
    try {
      actor = load_flow(a.checkpoint, &arch);
    } catch (const FormatError& e) {
      throw ConfigError(std::string("unreadable checkpoint: ") + e.what());
    }
    if (actor.dim() != kActionDim ||
        (actor.cond_dim() != kStateDim && actor.cond_dim() != kStateDim + kGoalDim)) {
      throw ConfigError("checkpoint architecture (d=" + std::to_string(actor.dim()) + ", cond_dim=" +
                        std::to_string(actor.cond_dim()) + ") does not fit the point-mass env (action " +
                        std::to_string(kActionDim) + ", state " + std::to_string(kStateDim) + ")");
    }
    if (maze.empty() && arch.has("maze") && arch.get("maze") != "-") maze = arch.get("maze");
  }
  if (maze.empty()) throw ConfigError("eval needs --maze");
  const MazeId mid = parse_maze(maze);
  const EnvConfig env = EnvConfig::for_maze(mid);
  std::optional<Vec2> goal;
  if (a.goal.size() == 2) {
    goal = Vec2(a.goal[0], a.goal[1]);
  } else if (!a.goal.empty()) {
    throw ConfigError("--goal expects x,y");
  }
  PolicyFactory make;
  if (a.expert) {
    const auto& routes = maze_info(mid).routes;
    if (a.mode < 0 || a.mode >= static_cast<int>(routes.size())) throw ConfigError("--mode out of range");
    make = [route = routes[static_cast<std::size_t>(a.mode)]](Rng&) { return expert_policy(route); };
  } else {
    const bool goal_cond = actor.cond_dim() == kStateDim + kGoalDim;
    if (goal_cond && !goal) goal = maze_info(mid).goal;
    const std::optional<Vec2> pol_goal = goal_cond ? goal : std::nullopt;
    const double sigma = a.sigma >= 0.0 ? a.sigma : (arch.has("noise_std") ? arch.get_double("noise_std") : 0.1);
    make = [&actor, pol_goal, denoise = a.denoise, sigma](Rng& r) {
      return flow_policy(actor, r, pol_goal, denoise, sigma);
    };
  }
  std::vector<Trajectory> runs;
  const EvalStats st = evaluate_episodes(env, make, a.episodes, a.seed, a.workers, goal, &runs);

  KeyValues report;
  report.set("policy", a.expert ? std::string("expert") : a.checkpoint);
  report.set("maze", maze);
  report.set("denoise", a.denoise);
  report.set("episodes", static_cast<long long>(st.episodes));
  report.set("success_rate", st.success_rate);
  report.set("mean_return", st.mean_return);
  report.set("std_return", st.std_return);
  report.set("mean_length", st.mean_length);
  report.set("version", std::string(version_string()));
  std::cout << report.to_text();

  fs::path out = a.out;
  if (out.empty()) out = a.expert ? fs::path(".") : fs::path(a.checkpoint).parent_path();
  if (out.empty()) out = ".";
  fs::create_directories(out);
  std::ofstream rep(out / "eval_report.txt", std::ios::trunc);
  rep << report.to_text();
  std::ofstream eps(out / "eval_episodes.txt", std::ios::trunc);
  for (const auto& tr : runs) {
    KeyValues e;
    e.set("episode", static_cast<long long>(tr.episode_id));
    e.set("length", static_cast<long long>(tr.length()));
    e.set("return", tr.rewards.sum());
    e.set("success", tr.terminal);
    e.set("final_x", tr.states(tr.states.rows() - 1, 0));
    e.set("final_y", tr.states(tr.states.rows() - 1, 1));
    eps << e.to_line() << '\n';
  }
  if (!rep || !eps) throw IoError("cannot write eval report to " + out.string());
  return 0;
}

// ---------------------------------------------------------------- check

int cmd_check(const std::string& suite, bool quick) {
  const auto results = run_checks(suite, quick, &std::cerr);
  print_check_table(std::cout, results);
  for (const auto& r : results) {
    if (!r.passed) return 1;
  }
  return 0;
}

// ---------------------------------------------------------------- plot-export

int cmd_plot_export(const std::vector<std::string>& runs, const std::string& out_path) {
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path, std::ios::trunc);
    if (!file) throw IoError("cannot write " + out_path);
  }
  std::ostream& os = out_path.empty() ? std::cout : file;
  os << "run,kind,step,metric,value\n";
  for (const auto& run : runs) {
    const fs::path dir(run);
    std::ifstream is(dir / "metrics.txt");
    if (!is) throw ConfigError("no metrics.txt in " + run);
    const std::string name = dir.filename().empty() ? dir.parent_path().filename().string()
                                                    : dir.filename().string();
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const KeyValues kv = KeyValues::parse_line(line);
      const std::string step = kv.get("step");
      const std::string kind = kv.has("kind") ? kv.get("kind") : "train";
      for (const auto& k : kv.keys()) {
        if (k == "step" || k == "kind") continue;
        double v = 0.0;
        try {
          v = kv.get_double(k);
        } catch (const FormatError&) {
          if (kv.get(k) == "true" || kv.get(k) == "false") {
            v = kv.get(k) == "true" ? 1.0 : 0.0;
          } else {
            continue;
          }
        }
        os << name << ',' << kind << ',' << step << ',' << k << ',' << format_double(v) << '\n';
      }
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nfrl: normalizing-flow policies, critics and goal samplers"};
  app.set_version_flag("--version", std::string(version_string()));
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "generate a scripted expert dataset");
  gen->add_option("--maze", gd.maze, "open, u_maze, big_maze, two_rooms")->capture_default_str();
  gen->add_option("--out", gd.out, "output file")->required();
  gen->add_option("--seed", gd.seed)->capture_default_str();
  gen->add_option("--n-traj", gd.data.n_traj)->capture_default_str();
  gen->add_option("--mode-mix", gd.data.mode_mix, "weights per route")->delimiter(',');
  gen->add_option("--action-noise", gd.data.action_noise)->capture_default_str();
  gen->add_option("--noisy-fraction", gd.data.noisy_fraction)->capture_default_str();
  gen->add_option("--noisy-std", gd.data.noisy_std)->capture_default_str();
  gen->add_option("--min-success", gd.data.min_success)->capture_default_str();
  gen->add_option("--horizon", gd.horizon, "override the maze horizon");

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "train one algorithm");
  train->add_option("--config", ta.configs, "key=value config file; repeat to layer");
  train->add_option("--set", ta.sets, "key=value override; applied last");
  train->add_option("--algo", ta.algo, "density-mle, density-vi, bc, gcbc, rlbc, ugs");
  train->add_option("--dataset", ta.dataset);
  train->add_option("--name", ta.name);
  train->add_option("--steps", ta.steps);
  train->add_option("--seed", ta.seed);
  train->add_option("--run-dir", ta.run_dir, "output root (default $NFRL_RUN_DIR or ./runs)");
  train->add_flag("--single-critic", ta.single_critic, "one Q head, no min backup");
  train->add_flag("--quiet", ta.quiet);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "evaluate a policy checkpoint");
  eval->add_option("--checkpoint", ea.checkpoint);
  eval->add_option("--maze", ea.maze, "defaults to the maze recorded with the checkpoint");
  eval->add_option("--episodes", ea.episodes)->capture_default_str();
  eval->add_option("--workers", ea.workers)->capture_default_str()->check(CLI::PositiveNumber);
  eval->add_option("--seed", ea.seed)->capture_default_str();
  eval->add_option("--goal", ea.goal, "x,y")->delimiter(',');
  eval->add_option("--out", ea.out, "report directory (default: next to the checkpoint)");
  eval->add_option("--sigma", ea.sigma, "noise level for --denoise (default: training noise_std)");
  eval->add_option("--mode", ea.mode, "route for --expert")->capture_default_str();
  eval->add_flag("--denoise", ea.denoise);
  eval->add_flag("--expert", ea.expert, "run the scripted expert instead of a checkpoint");

  std::string suite;
  bool quick = false;
  auto* check = app.add_subcommand("check", "run oracle check suites");
  check->add_option("suite", suite, "jacobian, invertibility, gradients, quadrature, tabular, occupancy, all")
      ->required();
  check->add_flag("--quick", quick);

  std::vector<std::string> runs;
  std::string csv;
  auto* plot = app.add_subcommand("plot-export", "write metrics as a long-format CSV table");
  plot->add_option("runs", runs, "run directories")->required();
  plot->add_option("--out", csv, "CSV file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) return cmd_gen_data(gd);
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_eval(ea);
    if (*check) return cmd_check(suite, quick);
    if (*plot) return cmd_plot_export(runs, csv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
