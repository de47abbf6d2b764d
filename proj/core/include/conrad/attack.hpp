#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "conrad/augment.hpp"
#include "conrad/losses.hpp"
#include "conrad/model.hpp"
#include "conrad/rng.hpp"
#include "conrad/types.hpp"

namespace conrad {

/// Full attack parameterization: threat model + objective + restarts.
struct AttackSpec {
  ThreatModel threat;
  LossKind loss_kind = LossKind::CrossEntropy;
  int restarts = 1;

  void validate() const;
};

/// Named presets. Evaluation presets follow the step-size rule
/// alpha = 2 eps / k with random start; the training presets are
/// (eps 8/255, alpha 2/255, k 10) under linf and
/// (eps 128/255, alpha 15/255, k 10) under l2, deterministic start.
///   pgd10_train, pgd10_train_l2, pgd20_eval, pgd100_eval, cw100_eval
AttackSpec attack_preset(const std::string& name);

/// Evaluation attack under an arbitrary ball: PGD-k, alpha = 2 eps / k.
AttackSpec pgd_eval_spec(Norm p, double epsilon, int steps,
                         LossKind kind = LossKind::CrossEntropy);

struct AttackResult {
  ImageBatch adversarial;        // clip(x + delta), best iterate per sample
  Tensor delta;                  // adversarial - x
  Tensor loss_before;            // per-sample objective at the start point
  Tensor loss_after;             // per-sample objective at the returned iterate
  std::vector<std::uint8_t> success;  // misclassified after attack

  void check_norm(Norm p, double epsilon) const;
};

/// Projected gradient ascent with per-sample best-iterate tracking across
/// steps and restarts. Step rules: sign(g) under linf, g/||g||_2 under l2,
/// and budget split over the top 1% |g| coordinates under l1; zero gradient
/// means no movement. reference is required for KlToReference.
///
/// bn_mode selects the statistics used by attack forwards: Eval (running
/// stats) for evaluation-time attacks, Frozen (stats captured from the clean
/// batch) during training.
AttackResult pgd(Classifier& model, const LabeledBatch& batch, const AttackSpec& spec,
                 const ProbBatch* reference, Rng rng, BnMode bn_mode = BnMode::Eval);

/// Margin objective max_{k != y} z_k - z_y per sample; positive iff the
/// logits misclassify. Needs at least two classes.
Tensor cw_margin_loss(const Tensor& logits, const std::vector<std::int32_t>& labels);

/// The normalized-gradient ascent step used inside pgd, exposed for
/// closed-form verification: sign(g) under linf, g/||g||_2 under l2, budget
/// split over the top 1% |g| coordinates under l1. In-place on one sample.
void pgd_ascent_step(float* delta, const float* grad, std::int64_t dim, Norm p, double alpha);

/// Attack both augmented views independently (no coupling inside the inner
/// maximization). Under Frozen statistics each branch captures its own clean
/// batch first; for TRADES-style KL attacks the per-branch reference is the
/// prediction on the clean augmented batch.
std::pair<AttackResult, AttackResult> attack_pair(Classifier& model, const LabeledBatch& batch,
                                                  const Transform& t1, const Transform& t2,
                                                  const AttackSpec& spec, Rng rng,
                                                  BnMode bn_mode = BnMode::Frozen);

}  // namespace conrad
