#pragma once

// Experiment orchestration behind the `ddp` subcommands.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ddp/baselines.hpp"
#include "ddp/config.hpp"
#include "ddp/trainer.hpp"

namespace ddp {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitInvalid = 2, kExitGuard = 3, kExitDiverged = 4 };

struct CommandOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "ddp-out";
};

struct RunManifest {
  std::string command;
  std::string config_json;  ///< normalized config snapshot
  std::string code_version;
  std::uint64_t seed = 0;
  std::vector<std::string> fixtures;
  std::map<std::string, std::string> outputs;  ///< role -> file name within out_dir
  std::string started_at;                      ///< UTC, ISO 8601
  std::map<std::string, std::string> input_hashes;
  std::string input_hash;  ///< git-style blob hash over the per-input hashes
};

/// SHA-1 of "blob <size>\0<content>", lowercase hex, as computed by git.
std::string git_blob_sha1(const std::string& content);

std::string manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const std::string& text);

struct PruneOutcome {
  TrainResult result;
  std::map<std::string, std::size_t> target_counts;
  std::size_t num_components = 0;
  std::vector<std::size_t> true_support;
  std::string summary;
};

/// Builds the fixture and trains the configured variant; writes nothing.
PruneOutcome run_prune(const RunConfig& cfg);

struct AblationRow {
  Variant variant = Variant::kDdp;
  std::uint64_t seed = 0;
  double hard_loss = 0.0;
  double deployed_loss = 0.0;
  double soft_loss = 0.0;
  std::size_t kept_count = 0;
  std::size_t target_count = 0;
  double constraint_gap = 0.0;   ///< |kept - P| / K
  double final_violation = 0.0;  ///< |sbar - target| at the last step
};

std::vector<AblationRow> run_ablation(const RunConfig& cfg);
std::string ablation_to_csv(const std::vector<AblationRow>& rows);

/// Applies the --seed override to a loaded config.
RunConfig resolve_config(const CommandOptions& opts);

int cmd_prune(const CommandOptions& opts);
int cmd_oracle(const CommandOptions& opts);
int cmd_ablate(const CommandOptions& opts);
int cmd_plot(const std::string& history_csv, const std::string& out_svg);

}  // namespace ddp
