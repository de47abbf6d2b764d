#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "conrad/losses.hpp"
#include "conrad/model.hpp"
#include "conrad/tensor.hpp"

namespace conrad {

enum class Method { AT, TRADES, MART };
enum class Regularizer { None, JsConsistency, ConventionalCr, MseCr, KlCr, AugmixCr };

std::string method_name(Method m);
Method method_from_name(const std::string& s);
std::string regularizer_name(Regularizer r);
Regularizer regularizer_from_name(const std::string& s);

/// Objective selection and hyperparameters. Defaults: lambda 1, tau 0.5,
/// beta 6 (TRADES), gamma 6 (MART). The ablation regularizers (MSE/KL/
/// conventional/3-way) are applied without temperature unless
/// regularizer_tau says otherwise.
struct LossConfig {
  Method method = Method::AT;
  Regularizer regularizer = Regularizer::None;
  double lambda = 1.0;
  double tau = 0.5;
  double beta = 6.0;
  double gamma = 6.0;
  double regularizer_tau = 1.0;

  void validate() const;
  /// Attack objective the method's inner maximization requires.
  LossKind required_attack_loss() const {
    return method == Method::TRADES ? LossKind::KlToReference : LossKind::CrossEntropy;
  }
};

/// One augmentation branch: the clean augmented batch and its attacked
/// counterpart (same transform, same samples).
struct BranchBatch {
  Tensor clean;  // T_i(x)
  Tensor adv;    // clip(T_i(x) + delta_i)
};

struct LossBreakdown {
  double total = 0.0;
  double adv = 0.0;          // method term, averaged over branches
  double consistency = 0.0;  // regularizer value (before lambda)
  double clean_ce = 0.0;     // TRADES/MART clean components, when present
  double robust_kl = 0.0;

  /// Accounting identity: total == adv + lambda * consistency.
  bool consistent(double lambda, double tol = 1e-6) const;
};

struct TotalLoss {
  Tape::Id node;  // scalar
  LossBreakdown values;
};

/// Builds the full two-branch training objective on the tape.
///   AT:     mean_i CE(f(adv_i), y)
///   TRADES: mean_i [ CE(f(clean_i), y) + beta * KL(f(clean_i) || f(adv_i)) ]
///   MART:   mean_i [ BCE(f(adv_i), y)
///                    + gamma * (1 - f_y(clean_i)) * KL(f(clean_i) || f(adv_i)) ]
/// plus lambda times the configured consistency regularizer. base_adv is the
/// attacked base-augmentation branch required by the 3-way regularizer.
TotalLoss total_loss_graph(Tape& tape, BoundModel& model, const std::vector<std::int32_t>& labels,
                           const BranchBatch& b1, const BranchBatch& b2, const Tensor* base_adv,
                           const LossConfig& config, BnMode mode);

// ---- eager forms of the individual regularizers ----

/// JS of temperature-scaled predictions on the two attacked branches.
double consistency_loss(Classifier& model, const ImageBatch& adv1, const ImageBatch& adv2,
                        double tau, BnMode mode = BnMode::Eval);

/// JS of plain predictions on the two clean augmented branches.
double conventional_cr(Classifier& model, const ImageBatch& clean1, const ImageBatch& clean2,
                       BnMode mode = BnMode::Eval);

/// Squared Euclidean distance between probability rows, batch mean.
double mse_cr(const ProbBatch& p1, const ProbBatch& p2);
/// One-directional KL (branch 1 || branch 2), batch mean.
double kl_cr(const ProbBatch& p1, const ProbBatch& p2);

/// 3-way JS of the attacked base branch and two attacked augmented branches.
double augmix_cr(Classifier& model, const ImageBatch& base_adv, const ImageBatch& aug1_adv,
                 const ImageBatch& aug2_adv, BnMode mode = BnMode::Eval);

}  // namespace conrad
