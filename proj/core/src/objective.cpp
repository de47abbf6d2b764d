#include "conrad/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace conrad {

std::string method_name(Method m) {
  switch (m) {
    case Method::AT: return "AT";
    case Method::TRADES: return "TRADES";
    case Method::MART: return "MART";
  }
  throw std::logic_error("unreachable method");
}

Method method_from_name(const std::string& s) {
  if (s == "AT" || s == "at") return Method::AT;
  if (s == "TRADES" || s == "trades") return Method::TRADES;
  if (s == "MART" || s == "mart") return Method::MART;
  throw std::invalid_argument("unknown training method: " + s);
}

std::string regularizer_name(Regularizer r) {
  switch (r) {
    case Regularizer::None: return "none";
    case Regularizer::JsConsistency: return "js_consistency";
    case Regularizer::ConventionalCr: return "conventional_cr";
    case Regularizer::MseCr: return "mse_cr";
    case Regularizer::KlCr: return "kl_cr";
    case Regularizer::AugmixCr: return "augmix_cr";
  }
  throw std::logic_error("unreachable regularizer");
}

Regularizer regularizer_from_name(const std::string& s) {
  for (Regularizer r : {Regularizer::None, Regularizer::JsConsistency, Regularizer::ConventionalCr,
                        Regularizer::MseCr, Regularizer::KlCr, Regularizer::AugmixCr})
    if (regularizer_name(r) == s) return r;
  throw std::invalid_argument("unknown regularizer: " + s);
}

void LossConfig::validate() const {
  if (lambda < 0) throw std::invalid_argument("loss.lambda must be >= 0");
  if (tau <= 0) throw std::invalid_argument("loss.tau must be > 0");
  if (regularizer_tau <= 0) throw std::invalid_argument("loss.regularizer_tau must be > 0");
}

bool LossBreakdown::consistent(double lambda, double tol) const {
  return std::abs(total - (adv + lambda * consistency)) <= tol;
}

namespace {

// Method rows for one branch; returns the per-sample [N] node and fills the
// breakdown components.
struct BranchRows {
  Tape::Id rows;
  Tape::Id adv_logits;    // for the consistency term
  Tape::Id clean_logits;  // valid when the method needed it, else -1
  double clean_ce = 0.0;
  double robust_kl = 0.0;
};

BranchRows method_rows(Tape& t, BoundModel& model, const std::vector<std::int32_t>& labels,
                       const BranchBatch& b, const LossConfig& cfg, BnMode mode) {
  BranchRows out{-1, -1, -1, 0.0, 0.0};
  switch (cfg.method) {
    case Method::AT: {
      out.adv_logits = model.forward(t.constant(b.adv), mode);
      out.rows = ce_rows_graph(t, out.adv_logits, labels);
      break;
    }
    case Method::TRADES: {
      out.clean_logits = model.forward(t.constant(b.clean), mode);
      out.adv_logits = model.forward(t.constant(b.adv), mode);
      const Tape::Id ce = ce_rows_graph(t, out.clean_logits, labels);
      const Tape::Id kl = kl_rows_graph(t, t.softmax_rows(out.clean_logits, 1.0f),
                                        t.softmax_rows(out.adv_logits, 1.0f));
      Tape::Id rows = t.add(ce, t.affine(kl, static_cast<float>(cfg.beta), 0.0f));
      out.rows = rows;
      out.clean_ce = t.value(t.mean_all(ce))[0];
      out.robust_kl = t.value(t.mean_all(kl))[0];
      break;
    }
    case Method::MART: {
      out.clean_logits = model.forward(t.constant(b.clean), mode);
      out.adv_logits = model.forward(t.constant(b.adv), mode);
      const Tape::Id p_adv = t.softmax_rows(out.adv_logits, 1.0f);
      const Tape::Id p_clean = t.softmax_rows(out.clean_logits, 1.0f);
      // BCE = CE(p_adv, y) - log(1 - max_{k != y} p_adv_k)
      const Tape::Id ce = ce_rows_graph(t, out.adv_logits, labels);
      const Tape::Id other = t.max_except_label(p_adv, labels);
      const Tape::Id log_term = t.log_floored(t.affine(other, -1.0f, 1.0f));
      const Tape::Id bce = t.sub(ce, log_term);
      // gamma * (1 - p_clean_y) * KL(p_clean || p_adv)
      const Tape::Id weight = t.affine(t.gather_label(p_clean, labels), -1.0f, 1.0f);
      const Tape::Id kl = kl_rows_graph(t, p_clean, p_adv);
      const Tape::Id weighted = t.mul(weight, kl);
      out.rows = t.add(bce, t.affine(weighted, static_cast<float>(cfg.gamma), 0.0f));
      out.clean_ce = t.value(t.mean_all(ce))[0];
      out.robust_kl = t.value(t.mean_all(kl))[0];
      break;
    }
  }
  return out;
}

}  // namespace

TotalLoss total_loss_graph(Tape& t, BoundModel& model, const std::vector<std::int32_t>& labels,
                           const BranchBatch& b1, const BranchBatch& b2, const Tensor* base_adv,
                           const LossConfig& cfg, BnMode mode) {
  cfg.validate();
  const BranchRows r1 = method_rows(t, model, labels, b1, cfg, mode);
  const BranchRows r2 = method_rows(t, model, labels, b2, cfg, mode);
  const Tape::Id adv1 = t.mean_all(r1.rows);
  const Tape::Id adv2 = t.mean_all(r2.rows);

  std::vector<Tape::Id> terms = {adv1, adv2};
  std::vector<float> coeffs = {0.5f, 0.5f};

  double consistency_value = 0.0;
  if (cfg.regularizer != Regularizer::None && cfg.lambda != 0.0) {
    Tape::Id cons_rows = -1;
    const float rtau = static_cast<float>(cfg.regularizer_tau);
    switch (cfg.regularizer) {
      case Regularizer::JsConsistency: {
        const Tape::Id p1 = t.softmax_rows(r1.adv_logits, static_cast<float>(cfg.tau));
        const Tape::Id p2 = t.softmax_rows(r2.adv_logits, static_cast<float>(cfg.tau));
        cons_rows = js_rows_graph(t, {p1, p2});
        break;
      }
      case Regularizer::ConventionalCr: {
        const Tape::Id c1 = r1.clean_logits >= 0 ? r1.clean_logits : model.forward(t.constant(b1.clean), mode);
        const Tape::Id c2 = r2.clean_logits >= 0 ? r2.clean_logits : model.forward(t.constant(b2.clean), mode);
        cons_rows = js_rows_graph(t, {t.softmax_rows(c1, rtau), t.softmax_rows(c2, rtau)});
        break;
      }
      case Regularizer::MseCr: {
        const Tape::Id d = t.sub(t.softmax_rows(r1.adv_logits, rtau), t.softmax_rows(r2.adv_logits, rtau));
        cons_rows = t.sum_rows(t.mul(d, d));
        break;
      }
      case Regularizer::KlCr:
        cons_rows = kl_rows_graph(t, t.softmax_rows(r1.adv_logits, rtau),
                                  t.softmax_rows(r2.adv_logits, rtau));
        break;
      case Regularizer::AugmixCr: {
        if (base_adv == nullptr)
          throw std::invalid_argument("augmix_cr needs the attacked base-augmentation branch");
        const Tape::Id pb = t.softmax_rows(model.forward(t.constant(*base_adv), mode), rtau);
        cons_rows = js_rows_graph(t, {pb, t.softmax_rows(r1.adv_logits, rtau),
                                      t.softmax_rows(r2.adv_logits, rtau)});
        break;
      }
      case Regularizer::None:
        break;
    }
    const Tape::Id cons_mean = t.mean_all(cons_rows);
    consistency_value = t.value(cons_mean)[0];
    terms.push_back(cons_mean);
    coeffs.push_back(static_cast<float>(cfg.lambda));
  }

  TotalLoss out;
  out.node = t.weighted_sum(terms, coeffs);
  out.values.total = t.value(out.node)[0];
  out.values.adv = 0.5 * (t.value(adv1)[0] + t.value(adv2)[0]);
  out.values.consistency = consistency_value;
  out.values.clean_ce = 0.5 * (r1.clean_ce + r2.clean_ce);
  out.values.robust_kl = 0.5 * (r1.robust_kl + r2.robust_kl);
  return out;
}

namespace {

double eager_js(Classifier& model, const std::vector<const Tensor*>& batches, double tau,
                BnMode mode) {
  Tape t;
  BoundModel bm(t, model, false);
  std::vector<Tape::Id> probs;
  for (const Tensor* b : batches)
    probs.push_back(t.softmax_rows(bm.forward(t.constant(*b), mode), static_cast<float>(tau)));
  return t.value(t.mean_all(js_rows_graph(t, probs)))[0];
}

}  // namespace

double consistency_loss(Classifier& model, const ImageBatch& adv1, const ImageBatch& adv2,
                        double tau, BnMode mode) {
  if (adv1.count() != adv2.count())
    throw std::invalid_argument("consistency_loss: branch batch sizes differ");
  if (tau <= 0) throw std::invalid_argument("consistency_loss: tau must be > 0");
  return eager_js(model, {&adv1.data, &adv2.data}, tau, mode);
}

double conventional_cr(Classifier& model, const ImageBatch& clean1, const ImageBatch& clean2,
                       BnMode mode) {
  return eager_js(model, {&clean1.data, &clean2.data}, 1.0, mode);
}

double mse_cr(const ProbBatch& p1, const ProbBatch& p2) {
  if (!p1.p.same_shape(p2.p)) throw std::invalid_argument("mse_cr: shape mismatch");
  double acc = 0.0;
  for (std::int64_t i = 0; i < p1.count(); ++i) {
    double row = 0.0;
    for (std::int64_t k = 0; k < p1.classes(); ++k) {
      const double d = static_cast<double>(p1.p.at2(i, k)) - p2.p.at2(i, k);
      row += d * d;
    }
    acc += row;
  }
  return acc / static_cast<double>(p1.count());
}

double kl_cr(const ProbBatch& p1, const ProbBatch& p2) {
  const Tensor rows = kl_rows(p1, p2);
  return rows.sum() / static_cast<double>(rows.numel());
}

double augmix_cr(Classifier& model, const ImageBatch& base_adv, const ImageBatch& aug1_adv,
                 const ImageBatch& aug2_adv, BnMode mode) {
  return eager_js(model, {&base_adv.data, &aug1_adv.data, &aug2_adv.data}, 1.0, mode);
}

}  // namespace conrad
