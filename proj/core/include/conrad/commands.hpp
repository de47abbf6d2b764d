#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace conrad {

/// Exit codes shared by every subcommand:
///   0 success, 1 runtime failure, 2 config/usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Full training run driven by a config file: trains, writes metrics.csv,
/// last/best checkpoints and the resolved config snapshot into out.dir.
int cmd_train(const std::string& config_path, std::ostream& out, std::ostream& err);

struct EvalOptions {
  std::string checkpoint;
  std::string suite;              // whitebox | unseen | corruption | transfer
  std::string source_checkpoint;  // transfer only
  std::string data_root = "./data";
  std::string dataset = "cifar10";
  std::string corruption_dir;     // default <data_root>/CIFAR-10-C
  std::string out_dir = ".";
  int batch_size = 256;
  int subset = 0;      // test-set prefix, 0 = full
  int sweep_steps = 100;
  std::uint64_t seed = 0;
};

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);

struct AttackOptions {
  std::string checkpoint;
  std::string preset = "pgd20_eval";
  std::string data_root = "./data";
  std::string dataset = "cifar10";
  std::string out_path = "attack_dump.json";
  int batch_size = 32;
  std::int64_t batch_index = 0;
  std::uint64_t seed = 0;
};

/// Single-batch attack inspection dump (per-sample losses, norms, outcome).
int cmd_attack(const AttackOptions& options, std::ostream& out, std::ostream& err);

/// Corruption suite shortcut (same output as cmd_eval with suite=corruption).
int cmd_corrupt_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);

struct PlotOptions {
  std::vector<std::string> metrics_csvs;
  std::vector<std::string> fraction_dirs;  // run dirs for the bar plot
  std::string out_dir = ".";
};

int cmd_plot(const PlotOptions& options, std::ostream& out, std::ostream& err);

/// Reads a config, halves the epoch budget, writes the result (stdout or file).
int cmd_halve(const std::string& config_path, const std::string& out_path, std::ostream& out,
              std::ostream& err);

}  // namespace conrad
