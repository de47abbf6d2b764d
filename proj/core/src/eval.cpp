#include "conrad/eval.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace conrad {

namespace {

constexpr std::int64_t kMinBatch = 1;

std::int64_t batch_count(std::int64_t n, int batch_size) {
  return (n + batch_size - 1) / batch_size;
}

}  // namespace

double clean_accuracy(Classifier& model, const LabeledBatch& testset, int batch_size) {
  if (batch_size < kMinBatch) throw std::invalid_argument("batch_size must be positive");
  const std::int64_t n = testset.count();
  std::int64_t hits = 0;
  for (std::int64_t b = 0; b < batch_count(n, batch_size); ++b) {
    LabeledBatch batch = slice_batch(testset, b * batch_size, batch_size);
    const Tensor logits = model.forward(batch.images.data, BnMode::Eval);
    for (std::int64_t i = 0; i < batch.count(); ++i)
      hits += argmax_row(logits, i) == batch.labels[static_cast<std::size_t>(i)];
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

double black_box_transfer(Classifier& source, Classifier& target, const LabeledBatch& testset,
                          const AttackSpec& spec, Rng rng, int batch_size) {
  if (spec.threat.epsilon == 0.0) return clean_accuracy(target, testset, batch_size);
  const std::int64_t n = testset.count();
  std::int64_t hits = 0;
  for (std::int64_t b = 0; b < batch_count(n, batch_size); ++b) {
    LabeledBatch batch = slice_batch(testset, b * batch_size, batch_size);
    ProbBatch reference;
    const bool needs_ref = spec.loss_kind == LossKind::KlToReference;
    if (needs_ref)
      reference = softmax_temperature(source.forward(batch.images.data, BnMode::Eval), 1.0);
    AttackResult r = pgd(source, batch, spec, needs_ref ? &reference : nullptr,
                         rng.split(static_cast<std::uint64_t>(b)), BnMode::Eval);
    const Tensor logits = target.forward(r.adversarial.data, BnMode::Eval);
    for (std::int64_t i = 0; i < batch.count(); ++i)
      hits += argmax_row(logits, i) == batch.labels[static_cast<std::size_t>(i)];
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

double robust_accuracy(Classifier& model, const LabeledBatch& testset, const AttackSpec& spec,
                       Rng rng, int batch_size) {
  return black_box_transfer(model, model, testset, spec, rng, batch_size);
}

std::vector<EvalReport::SweepCell> unseen_sweep(Classifier& model, const LabeledBatch& testset,
                                                Rng rng, int batch_size, int steps) {
  const std::vector<std::pair<Norm, double>> cells = {
      {Norm::LInf, 4.0 / 255.0},  {Norm::LInf, 16.0 / 255.0}, {Norm::L2, 150.0 / 255.0},
      {Norm::L2, 300.0 / 255.0},  {Norm::L1, 2000.0 / 255.0}, {Norm::L1, 4000.0 / 255.0},
  };
  std::vector<EvalReport::SweepCell> out;
  std::uint64_t cell_id = 0;
  for (const auto& [p, eps] : cells) {
    const AttackSpec spec = pgd_eval_spec(p, eps, steps);
    out.push_back({p, eps, robust_accuracy(model, testset, spec, rng.split(cell_id++), batch_size)});
  }
  return out;
}

std::pair<double, std::vector<std::pair<std::string, double>>> mce(
    Classifier& model, const std::string& corruption_dir, int batch_size,
    std::ostream* warnings) {
  std::vector<std::pair<std::string, double>> per_type;
  for (const std::string& name : corruption_type_names()) {
    const auto present = corruption_types_present(corruption_dir);
    if (std::find(present.begin(), present.end(), name) == present.end()) {
      if (warnings) (*warnings) << "corruption file missing, skipped: " << name << "\n";
      continue;
    }
    const CorruptionFile cf = load_corruption(corruption_dir, name);
    double error_sum = 0.0;
    for (int severity = 1; severity <= cf.severities; ++severity) {
      std::int64_t hits = 0;
      for (std::int64_t b = 0; b < batch_count(cf.per_severity, batch_size); ++b) {
        LabeledBatch batch = cf.batch(severity, b * batch_size, batch_size);
        const Tensor logits = model.forward(batch.images.data, BnMode::Eval);
        for (std::int64_t i = 0; i < batch.count(); ++i)
          hits += argmax_row(logits, i) == batch.labels[static_cast<std::size_t>(i)];
      }
      error_sum += 100.0 * (1.0 - static_cast<double>(hits) / static_cast<double>(cf.per_severity));
    }
    per_type.emplace_back(name, error_sum / static_cast<double>(cf.severities));
  }
  if (per_type.empty())
    throw std::runtime_error("no corruption files found under " + corruption_dir);
  double total = 0.0;
  for (const auto& [name, err] : per_type) total += err;
  return {total / static_cast<double>(per_type.size()), per_type};
}

std::optional<double> confusing_class_rate(Classifier& model, const LabeledBatch& testset,
                                           const AttackSpec& spec, Rng rng, int batch_size) {
  const std::int64_t n = testset.count();
  std::int64_t misclassified = 0, to_confusing = 0;
  for (std::int64_t b = 0; b < batch_count(n, batch_size); ++b) {
    LabeledBatch batch = slice_batch(testset, b * batch_size, batch_size);
    const Tensor clean_logits = model.forward(batch.images.data, BnMode::Eval);

    ProbBatch reference;
    const bool needs_ref = spec.loss_kind == LossKind::KlToReference;
    if (needs_ref) reference = softmax_temperature(clean_logits, 1.0);
    AttackResult r = pgd(model, batch, spec, needs_ref ? &reference : nullptr,
                         rng.split(static_cast<std::uint64_t>(b)), BnMode::Eval);
    const Tensor adv_logits = model.forward(r.adversarial.data, BnMode::Eval);

    for (std::int64_t i = 0; i < batch.count(); ++i) {
      const std::int32_t y = batch.labels[static_cast<std::size_t>(i)];
      const std::int32_t pred = argmax_row(adv_logits, i);
      if (pred == y) continue;
      // most confusing class of the clean input
      std::int32_t mc = -1;
      float best = -std::numeric_limits<float>::infinity();
      for (std::int64_t k = 0; k < clean_logits.size(1); ++k) {
        if (static_cast<std::int32_t>(k) == y) continue;
        if (clean_logits.at2(i, k) > best) {
          best = clean_logits.at2(i, k);
          mc = static_cast<std::int32_t>(k);
        }
      }
      ++misclassified;
      to_confusing += pred == mc;
    }
  }
  if (misclassified == 0) return std::nullopt;
  return 100.0 * static_cast<double>(to_confusing) / static_cast<double>(misclassified);
}

namespace {

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void EvalReport::write_csv(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write eval report: " + path);
  f << "# config=" << config_hash << "\n";
  f << "metric,value\n";
  if (clean_acc >= 0) f << "clean_acc," << format_number(clean_acc) << "\n";
  for (const auto& [name, acc] : robust) f << name << "," << format_number(acc) << "\n";
  for (const auto& cell : sweep)
    f << "sweep_" << norm_name(cell.p) << "_" << format_number(cell.epsilon * 255.0) << "_255,"
      << format_number(cell.accuracy) << "\n";
  if (mce >= 0) f << "mce," << format_number(mce) << "\n";
  for (const auto& [name, err] : corruption_errors)
    f << "corruption_" << name << "," << format_number(err) << "\n";
  if (confusing_rate >= 0) f << "confusing_class_rate," << format_number(confusing_rate) << "\n";
}

void EvalReport::write_json(const std::string& path) const {
  nlohmann::json j;
  j["config_hash"] = config_hash;
  if (clean_acc >= 0) j["clean_acc"] = clean_acc;
  for (const auto& [name, acc] : robust) j["robust"][name] = acc;
  for (const auto& cell : sweep) {
    nlohmann::json c;
    c["norm"] = norm_name(cell.p);
    c["epsilon"] = cell.epsilon;
    c["accuracy"] = cell.accuracy;
    j["sweep"].push_back(c);
  }
  if (mce >= 0) j["mce"] = mce;
  for (const auto& [name, err] : corruption_errors) j["corruption_errors"][name] = err;
  if (confusing_rate >= 0) j["confusing_class_rate"] = confusing_rate;
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write eval report: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace conrad
