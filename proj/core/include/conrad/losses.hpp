#pragma once

#include <cstdint>
#include <vector>

#include "conrad/graph.hpp"
#include "conrad/tensor.hpp"

namespace conrad {

/// Batch of categorical distributions [N,K]; rows nonnegative, summing to 1.
/// Only softmax-style operations produce these.
struct ProbBatch {
  Tensor p;

  std::int64_t count() const { return p.size(0); }
  std::int64_t classes() const { return p.size(1); }
  void validate() const;
};

/// Softmax(logits / tau) rowwise; tau > 0 (tau < 1 sharpens).
ProbBatch softmax_temperature(const Tensor& logits, double tau);

/// KL(p || q) in nats for two distributions; probabilities are floored at
/// 1e-12 before any log.
double kl_divergence(const std::vector<float>& p, const std::vector<float>& q);

/// Jensen-Shannon divergence of 2 or 3 distributions: (1/n) sum KL(p_i || m)
/// with m the mean. Symmetric, bounded by ln n, zero iff all equal.
double js_divergence(const std::vector<std::vector<float>>& dists);

/// Mean over the batch of -log p_y (floored).
double cross_entropy(const ProbBatch& probs, const std::vector<std::int32_t>& labels);

/// Rowwise KL between two probability batches -> [N].
Tensor kl_rows(const ProbBatch& p, const ProbBatch& q);

std::int32_t argmax_row(const Tensor& rows, std::int64_t row);
/// Fraction of rows whose argmax equals the label, in [0,1].
double accuracy(const Tensor& logits, const std::vector<std::int32_t>& labels);

// ---- tape builders; all return per-sample [N] nodes ----

/// -log softmax(z)_y per sample.
Tape::Id ce_rows_graph(Tape& t, Tape::Id logits, const std::vector<std::int32_t>& labels);

/// KL(p || q) per sample for probability nodes p, q.
Tape::Id kl_rows_graph(Tape& t, Tape::Id p_probs, Tape::Id q_probs);

/// JS of 2 or 3 probability nodes per sample.
Tape::Id js_rows_graph(Tape& t, const std::vector<Tape::Id>& prob_nodes);

/// max_{k != y} z_k - z_y per sample (positive iff misclassified).
Tape::Id cw_margin_rows_graph(Tape& t, Tape::Id logits, const std::vector<std::int32_t>& labels);

}  // namespace conrad
