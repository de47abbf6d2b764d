#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "conrad/attack.hpp"
#include "conrad/dataset.hpp"
#include "conrad/model.hpp"

namespace conrad {

/// Everything the harness can measure, percentages in [0,100]. Fields keep
/// -1 when the corresponding suite did not run.
struct EvalReport {
  struct SweepCell {
    Norm p;
    double epsilon;
    double accuracy;
  };

  std::string config_hash;
  double clean_acc = -1.0;
  std::vector<std::pair<std::string, double>> robust;  // attack name -> %
  std::vector<SweepCell> sweep;
  double mce = -1.0;
  std::vector<std::pair<std::string, double>> corruption_errors;
  double confusing_rate = -1.0;

  /// Flat metric,value rows.
  void write_csv(const std::string& path) const;
  /// Structured document with the same content.
  void write_json(const std::string& path) const;
};

double clean_accuracy(Classifier& model, const LabeledBatch& testset, int batch_size = 256);

/// Accuracy after attacking every batch; epsilon == 0 short-circuits to the
/// clean forward path so the two numbers agree exactly.
double robust_accuracy(Classifier& model, const LabeledBatch& testset, const AttackSpec& spec,
                       Rng rng, int batch_size = 256);

/// Adversaries crafted against `source`, accuracy measured on `target`.
/// With source == target this is exactly robust_accuracy.
double black_box_transfer(Classifier& source, Classifier& target, const LabeledBatch& testset,
                          const AttackSpec& spec, Rng rng, int batch_size = 256);

/// PGD-100 grid over the unseen-attack cells:
/// linf {4,16}/255, l2 {150,300}/255, l1 {2000,4000}/255.
std::vector<EvalReport::SweepCell> unseen_sweep(Classifier& model, const LabeledBatch& testset,
                                                Rng rng, int batch_size = 256, int steps = 100);

/// Mean corruption error over the corruption types present under `dir`:
/// per-corruption error is the mean over its 5 severities, mCE the plain
/// mean over types. Missing files are reported to `warnings` and skipped.
std::pair<double, std::vector<std::pair<std::string, double>>> mce(
    Classifier& model, const std::string& corruption_dir, int batch_size = 256,
    std::ostream* warnings = nullptr);

/// Among adversarial examples that end up misclassified, the fraction
/// predicted as the clean input's most confusing class
/// argmax_{k != y} f(x)_k. Empty when the attack misclassifies nothing.
std::optional<double> confusing_class_rate(Classifier& model, const LabeledBatch& testset,
                                           const AttackSpec& spec, Rng rng, int batch_size = 256);

}  // namespace conrad
