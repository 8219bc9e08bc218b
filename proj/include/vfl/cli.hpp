#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace vfl::cli {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitBadInput = 2;

struct CommonArgs {
    std::string config_path;
    std::optional<std::string> out_dir;   // --out, overrides config and env
    std::optional<std::uint64_t> seed;    // --seed, overrides config
};

// Environment variable consulted for the output directory when --out is
// absent (config value is the final fallback).
inline constexpr const char* kOutDirEnv = "VFLSIM_OUT_DIR";

// train: runs the two-party loop, writes metrics.jsonl / metrics.csv /
// model.ckpt / resolved_config.json into the output directory.
int cmd_train(const CommonArgs& args);

// attack: loads a frozen extractor (and predictor) from a checkpoint,
// trains a fresh reconstructor against it, writes attack_report.json.
int cmd_attack(const CommonArgs& args, const std::string& checkpoint_path);

// sweep: cross product of the config's sweep grid; each cell trains in an
// isolated subdirectory; summary.csv collects final metrics per cell.
int cmd_sweep(const CommonArgs& args, std::size_t parallel);

// dcor-batch-study: distance correlation between dataset batches and fresh
// gaussian noise across batch sizes; writes dcor_batch_study.csv.
int cmd_dcor_batch_study(const CommonArgs& args);

}  // namespace vfl::cli
