#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "conrad/attack.hpp"
#include "conrad/augment.hpp"
#include "conrad/checkpoint.hpp"
#include "conrad/dataset.hpp"
#include "conrad/metrics.hpp"
#include "conrad/model.hpp"
#include "conrad/objective.hpp"
#include "conrad/optimizer.hpp"

namespace conrad {

/// Full training recipe: SGD with momentum 0.9 and weight decay 5e-4,
/// learning rate dropped by 10x at 50% and 75% of the epoch budget, the
/// two-branch objective with independently attacked augmentations.
struct TrainConfig {
  int epochs = 200;
  int batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int milestone1 = 0;  // 0 derives ceil(0.5 * epochs)
  int milestone2 = 0;  // 0 derives ceil(0.75 * epochs)

  AttackSpec attack = attack_preset("pgd10_train");
  LossConfig loss;
  AugmentPolicy policy = AugmentPolicy::named(PolicyName::None);
  double fraction = 1.0;
  std::uint64_t seed = 0;
  /// Test-set prefix used for per-epoch evaluation; 0 means the full set.
  int eval_subset = 0;

  Arch arch = Arch::TinyCnn;
  int num_classes = 10;
  std::array<int, 3> input_shape{3, 32, 32};

  void validate() const;
  int milestone(int which) const;  // 1 or 2, resolved
  /// Learning rate for a 1-based epoch index.
  double lr_at_epoch(int epoch) const;
};

/// Same schedule compressed into half the budget (milestone fractions kept).
TrainConfig halve_epoch_budget(TrainConfig config);

struct TrainState {
  Classifier model;
  Sgd optimizer;
  int epoch = 0;  // completed epochs
  double best_pgd10 = -1.0;
  std::vector<MetricsRow> history;
};

/// One optimization step on a batch: sample (T1, T2), attack each branch
/// independently under frozen clean-batch statistics, build the configured
/// objective, apply SGD. Throws on non-finite loss with a diagnostic that
/// names the config hash, step and term breakdown.
LossBreakdown train_step(TrainState& state, const LabeledBatch& batch, const TrainConfig& config,
                         double lr, Rng step_rng, const std::string& config_hash = "");

struct RunResult {
  std::vector<MetricsRow> history;
  std::string last_path;
  std::string best_path;
  double best_pgd10 = -1.0;
};

/// Full training driver: per-epoch passes over the (possibly fraction-
/// subsampled) train split, clean + PGD-10 evaluation per epoch, metrics CSV
/// appended atomically, best-PGD10 and last checkpoints persisted. When
/// out_dir already holds a checkpoint for this config the run resumes from
/// it.
RunResult run_training(const TrainConfig& config, const DatasetSplit& data,
                       const std::string& out_dir, const std::string& config_hash,
                       std::ostream* log = nullptr);

}  // namespace conrad
