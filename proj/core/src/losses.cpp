#include "conrad/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace conrad {

namespace {
constexpr double kFloor = 1e-12;

double floored_log(double x) { return std::log(std::max(x, kFloor)); }
}  // namespace

void ProbBatch::validate() const {
  if (p.rank() != 2) throw std::invalid_argument("ProbBatch must be rank 2");
  for (std::int64_t i = 0; i < p.size(0); ++i) {
    double s = 0.0;
    for (std::int64_t k = 0; k < p.size(1); ++k) {
      const float v = p.at2(i, k);
      if (!(v >= 0.0f)) throw std::invalid_argument("ProbBatch entries must be nonnegative");
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-6) throw std::invalid_argument("ProbBatch row does not sum to 1");
  }
}

ProbBatch softmax_temperature(const Tensor& logits, double tau) {
  if (tau <= 0.0) throw std::invalid_argument("temperature must be > 0");
  Tape t;
  const Tape::Id z = t.constant(logits);
  const Tape::Id p = t.softmax_rows(z, static_cast<float>(tau));
  return ProbBatch{t.value(p)};
}

double kl_divergence(const std::vector<float>& p, const std::vector<float>& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    s += p[i] * (floored_log(p[i]) - floored_log(q[i]));
  return s;
}

double js_divergence(const std::vector<std::vector<float>>& dists) {
  const std::size_t n = dists.size();
  if (n != 2 && n != 3) throw std::invalid_argument("js_divergence: expects 2 or 3 distributions");
  const std::size_t len = dists[0].size();
  for (const auto& d : dists)
    if (d.size() != len) throw std::invalid_argument("js_divergence: length mismatch");
  std::vector<float> m(len, 0.0f);
  for (const auto& d : dists)
    for (std::size_t i = 0; i < len; ++i) m[i] += d[i] / static_cast<float>(n);
  double s = 0.0;
  for (const auto& d : dists) s += kl_divergence(d, m);
  return s / static_cast<double>(n);
}

double cross_entropy(const ProbBatch& probs, const std::vector<std::int32_t>& labels) {
  if (static_cast<std::int64_t>(labels.size()) != probs.count())
    throw std::invalid_argument("cross_entropy: label count mismatch");
  double s = 0.0;
  for (std::int64_t i = 0; i < probs.count(); ++i)
    s -= floored_log(probs.p.at2(i, labels[static_cast<std::size_t>(i)]));
  return s / static_cast<double>(probs.count());
}

Tensor kl_rows(const ProbBatch& p, const ProbBatch& q) {
  if (!p.p.same_shape(q.p)) throw std::invalid_argument("kl_rows: shape mismatch");
  Tensor out({p.count()});
  for (std::int64_t i = 0; i < p.count(); ++i) {
    double s = 0.0;
    for (std::int64_t k = 0; k < p.classes(); ++k)
      s += p.p.at2(i, k) * (floored_log(p.p.at2(i, k)) - floored_log(q.p.at2(i, k)));
    out[i] = static_cast<float>(s);
  }
  return out;
}

std::int32_t argmax_row(const Tensor& rows, std::int64_t row) {
  std::int32_t best = 0;
  float bv = rows.at2(row, 0);
  for (std::int64_t k = 1; k < rows.size(1); ++k)
    if (rows.at2(row, k) > bv) {
      bv = rows.at2(row, k);
      best = static_cast<std::int32_t>(k);
    }
  return best;
}

double accuracy(const Tensor& logits, const std::vector<std::int32_t>& labels) {
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < logits.size(0); ++i)
    hits += argmax_row(logits, i) == labels[static_cast<std::size_t>(i)];
  return static_cast<double>(hits) / static_cast<double>(logits.size(0));
}

Tape::Id ce_rows_graph(Tape& t, Tape::Id logits, const std::vector<std::int32_t>& labels) {
  const Tape::Id p = t.softmax_rows(logits, 1.0f);
  const Tape::Id py = t.gather_label(p, labels);
  return t.affine(t.log_floored(py), -1.0f, 0.0f);
}

Tape::Id kl_rows_graph(Tape& t, Tape::Id p_probs, Tape::Id q_probs) {
  const Tape::Id diff = t.sub(t.log_floored(p_probs), t.log_floored(q_probs));
  return t.sum_rows(t.mul(p_probs, diff));
}

Tape::Id js_rows_graph(Tape& t, const std::vector<Tape::Id>& prob_nodes) {
  const std::size_t n = prob_nodes.size();
  if (n != 2 && n != 3) throw std::invalid_argument("js_rows_graph: expects 2 or 3 nodes");
  Tape::Id sum = t.add(prob_nodes[0], prob_nodes[1]);
  if (n == 3) sum = t.add(sum, prob_nodes[2]);
  const Tape::Id m = t.affine(sum, 1.0f / static_cast<float>(n), 0.0f);
  const Tape::Id log_m = t.log_floored(m);
  Tape::Id acc = -1;
  for (std::size_t i = 0; i < n; ++i) {
    const Tape::Id term =
        t.sum_rows(t.mul(prob_nodes[i], t.sub(t.log_floored(prob_nodes[i]), log_m)));
    acc = (i == 0) ? term : t.add(acc, term);
  }
  return t.affine(acc, 1.0f / static_cast<float>(n), 0.0f);
}

Tape::Id cw_margin_rows_graph(Tape& t, Tape::Id logits, const std::vector<std::int32_t>& labels) {
  return t.sub(t.max_except_label(logits, labels), t.gather_label(logits, labels));
}

}  // namespace conrad
