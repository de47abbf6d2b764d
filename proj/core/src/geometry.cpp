#include "conrad/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace conrad {

std::string norm_name(Norm p) {
  switch (p) {
    case Norm::L1: return "l1";
    case Norm::L2: return "l2";
    case Norm::LInf: return "linf";
  }
  throw std::logic_error("unreachable norm");
}

Norm norm_from_name(const std::string& name) {
  if (name == "l1") return Norm::L1;
  if (name == "l2") return Norm::L2;
  if (name == "linf") return Norm::LInf;
  throw std::invalid_argument("norm not supported: " + name + " (expected l1, l2 or linf)");
}

std::string loss_kind_name(LossKind k) {
  switch (k) {
    case LossKind::CrossEntropy: return "ce";
    case LossKind::KlToReference: return "kl_to_reference";
    case LossKind::CwMargin: return "cw_margin";
  }
  throw std::logic_error("unreachable loss kind");
}

LossKind loss_kind_from_name(const std::string& name) {
  if (name == "ce") return LossKind::CrossEntropy;
  if (name == "kl_to_reference") return LossKind::KlToReference;
  if (name == "cw_margin") return LossKind::CwMargin;
  throw std::invalid_argument("unknown attack loss kind: " + name);
}

void ImageBatch::validate() const {
  if (data.rank() != 4) throw std::invalid_argument("ImageBatch must be rank 4, got " + data.shape_str());
  if (data.size(0) < 1) throw std::invalid_argument("ImageBatch needs at least one image");
  for (std::int64_t i = 0; i < data.numel(); ++i) {
    const float v = data[i];
    if (!(v >= 0.0f && v <= 1.0f))
      throw std::invalid_argument("ImageBatch value outside [0,1] (or non-finite)");
  }
}

void LabeledBatch::validate(int num_classes) const {
  images.validate();
  if (static_cast<std::int64_t>(labels.size()) != images.count())
    throw std::invalid_argument("label count does not match image count");
  for (std::int32_t y : labels)
    if (y < 0 || y >= num_classes) throw std::invalid_argument("label out of range");
}

void ThreatModel::validate() const {
  if (epsilon < 0) throw std::invalid_argument("ThreatModel: epsilon must be >= 0");
  if (steps < 1) throw std::invalid_argument("ThreatModel: steps must be >= 1");
  if (step_size <= 0) throw std::invalid_argument("ThreatModel: step_size must be > 0");
}

namespace {

std::int64_t per_sample_dim(const Tensor& t) {
  if (t.rank() < 1 || t.size(0) < 1) throw std::invalid_argument("expected nonempty leading dimension");
  return t.numel() / t.size(0);
}

// Euclidean projection of v (treated elementwise by magnitude) onto the l1
// ball of radius eps. Sorting-based: O(d log d), exact up to rounding.
void project_l1_sample(float* v, std::int64_t d, double eps) {
  double norm1 = 0.0;
  for (std::int64_t i = 0; i < d; ++i) norm1 += std::abs(static_cast<double>(v[i]));
  if (norm1 <= eps) return;

  std::vector<double> mag(static_cast<std::size_t>(d));
  for (std::int64_t i = 0; i < d; ++i) mag[static_cast<std::size_t>(i)] = std::abs(static_cast<double>(v[i]));
  std::sort(mag.begin(), mag.end(), std::greater<double>());

  double cumsum = 0.0;
  double theta = 0.0;
  for (std::int64_t j = 0; j < d; ++j) {
    cumsum += mag[static_cast<std::size_t>(j)];
    const double candidate = (cumsum - eps) / static_cast<double>(j + 1);
    if (mag[static_cast<std::size_t>(j)] - candidate > 0.0)
      theta = candidate;
    else
      break;
  }
  for (std::int64_t i = 0; i < d; ++i) {
    const double m = std::abs(static_cast<double>(v[i])) - theta;
    const double shrunk = m > 0.0 ? m : 0.0;
    v[i] = static_cast<float>(v[i] >= 0.0f ? shrunk : -shrunk);
  }
}

}  // namespace

Tensor lp_norms(const Tensor& delta, Norm p) {
  const std::int64_t n = delta.size(0);
  const std::int64_t d = per_sample_dim(delta);
  Tensor out({n});
  for (std::int64_t s = 0; s < n; ++s) {
    const float* v = delta.data() + s * d;
    double acc = 0.0;
    switch (p) {
      case Norm::L1:
        for (std::int64_t i = 0; i < d; ++i) acc += std::abs(static_cast<double>(v[i]));
        break;
      case Norm::L2:
        for (std::int64_t i = 0; i < d; ++i) acc += static_cast<double>(v[i]) * v[i];
        acc = std::sqrt(acc);
        break;
      case Norm::LInf:
        for (std::int64_t i = 0; i < d; ++i) acc = std::max(acc, std::abs(static_cast<double>(v[i])));
        break;
    }
    out[s] = static_cast<float>(acc);
  }
  return out;
}

Tensor project_lp(const Tensor& delta, Norm p, double epsilon) {
  if (epsilon <= 0) throw std::invalid_argument("project_lp: epsilon must be > 0");
  Tensor out = delta;
  const std::int64_t n = out.size(0);
  const std::int64_t d = per_sample_dim(out);
  const float eps_f = static_cast<float>(epsilon);

  for (std::int64_t s = 0; s < n; ++s) {
    float* v = out.data() + s * d;
    switch (p) {
      case Norm::LInf:
        for (std::int64_t i = 0; i < d; ++i) v[i] = std::min(eps_f, std::max(-eps_f, v[i]));
        break;
      case Norm::L2: {
        double norm2 = 0.0;
        for (std::int64_t i = 0; i < d; ++i) norm2 += static_cast<double>(v[i]) * v[i];
        norm2 = std::sqrt(norm2);
        if (norm2 > epsilon) {
          const float scale = static_cast<float>(epsilon / norm2);
          for (std::int64_t i = 0; i < d; ++i) v[i] *= scale;
        }
        break;
      }
      case Norm::L1:
        project_l1_sample(v, d, epsilon);
        break;
    }
  }
  return out;
}

ImageBatch clip_to_image(ImageBatch batch) {
  batch.data.clamp(0.0f, 1.0f);
  return batch;
}

}  // namespace conrad
