// Copyright 2026 The nfrl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <string>

#include "nfrl/cli/run_config.hpp"
#include "nfrl/flow/flow.hpp"
#include "nfrl/kv.hpp"

namespace nfrl {

/// explicit path if non-empty, else $NFRL_RUN_DIR, else "runs".
std::filesystem::path resolve_run_root(const std::string& explicit_root);

/// One run's output directory:
///
///   manifest.txt   config snapshot plus code version (re-readable as a config)
///   metrics.txt    one key=value record per line, deterministic
///   timing.txt     step and wall-clock milliseconds
///   <role>-step<N>.ckpt / .arch and <role>-latest.ckpt / .arch
class RunDir {
 public:
  RunDir(const std::filesystem::path& root, const std::string& name);

  const std::filesystem::path& path() const noexcept { return dir_; }

  void write_manifest(const RunConfig& cfg);
  void log_metrics(const KeyValues& record);
  void log_timing(long long step, double wall_ms);

  /// Writes the parameters plus an architecture sidecar; returns the .ckpt path.
  std::filesystem::path save_flow(const std::string& role, const FlowModel& model, long long step,
                                  const KeyValues& extra);
  std::filesystem::path save_store(const std::string& role, const ParamStore& store, long long step,
                                   const KeyValues& arch);

 private:
  std::filesystem::path dir_;
  std::ofstream metrics_;
  std::ofstream timing_;
};

/// Architecture sidecar path for a checkpoint path.
std::filesystem::path arch_path(const std::filesystem::path& ckpt);

/// Loads a flow checkpoint; ConfigError when the sidecar is missing or the
/// stored layout does not match the sidecar architecture.
FlowModel load_flow(const std::filesystem::path& ckpt, KeyValues* arch = nullptr);

struct TrainResult {
  std::filesystem::path dir;
  long long steps = 0;
  KeyValues last_metrics;
  std::optional<KeyValues> last_eval;
};

/// Runs one configuration to completion. A NumericError saves "-last_good"
/// checkpoints of the current parameters and is rethrown.
TrainResult run_training(const RunConfig& cfg, const std::filesystem::path& root,
                         std::ostream* progress = nullptr);

}  // namespace nfrl
