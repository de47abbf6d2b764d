#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "conrad/train.hpp"

namespace conrad {

/// Configuration problem attributable to a specific key; maps to exit code 2.
struct ConfigError : std::runtime_error {
  std::string key;
  ConfigError(std::string bad_key, const std::string& what)
      : std::runtime_error("config key '" + bad_key + "': " + what), key(std::move(bad_key)) {}
};

/// Everything a run needs, assembled from a flat key=value file with dotted
/// section keys (e.g. loss.lambda=1.0, attack.epsilon=8/255). Unknown keys
/// are rejected by name. Epsilon-like values accept a/b fractions.
struct RunConfig {
  TrainConfig train;

  std::string data_root = "./data";
  std::string dataset = "cifar10";  // cifar10 | synthetic
  std::int64_t synthetic_train = 5000;
  std::int64_t synthetic_test = 1000;
  std::string out_dir = "runs/default";
  int eval_batch_size = 256;
  std::string corruption_dir;  // empty: <data_root>/CIFAR-10-C
  std::string custom_policy_path;

  static RunConfig from_file(const std::string& path);
  static RunConfig from_text(const std::string& text);

  /// Canonical snapshot: every resolved key, sorted, one per line.
  std::string serialize() const;
  /// FNV-1a 64 of the canonical snapshot, 16 hex digits.
  std::string hash() const;

  std::string resolved_corruption_dir() const;
  /// Loads cifar10 from the (possibly overridden) data root, or builds the
  /// deterministic synthetic corpus.
  DatasetSplit load_dataset() const;

  void validate() const;
};

std::uint64_t fnv1a64(const std::string& text);

}  // namespace conrad
