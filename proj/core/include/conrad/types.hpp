#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "conrad/tensor.hpp"

namespace conrad {

enum class Norm { L1, L2, LInf };

std::string norm_name(Norm p);
Norm norm_from_name(const std::string& name);

/// Objective maximized by the attack inner loop.
enum class LossKind { CrossEntropy, KlToReference, CwMargin };

std::string loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& name);

/// Batch of images in pixel space: rank-4 [N,C,H,W], every value in [0,1].
struct ImageBatch {
  Tensor data;

  ImageBatch() = default;
  explicit ImageBatch(Tensor t) : data(std::move(t)) {}

  std::int64_t count() const { return data.size(0); }
  std::int64_t channels() const { return data.size(1); }
  std::int64_t height() const { return data.size(2); }
  std::int64_t width() const { return data.size(3); }

  /// Throws unless rank 4, N >= 1, and all values finite in [0,1].
  void validate() const;
};

struct LabeledBatch {
  ImageBatch images;
  std::vector<std::int32_t> labels;

  std::int64_t count() const { return images.count(); }
  /// Labels must match image count and lie in {0..num_classes-1}.
  void validate(int num_classes) const;
};

/// Attacker constraint set: an lp ball of radius epsilon (pixel units in
/// [0,1] scale, e.g. 8/255 = 0.03137...) plus the iteration schedule.
struct ThreatModel {
  Norm p = Norm::LInf;
  double epsilon = 8.0 / 255.0;
  int steps = 10;
  double step_size = 2.0 / 255.0;
  bool random_start = false;

  /// epsilon == 0 is tolerated as the degenerate "clean" budget used by
  /// evaluation short-circuits; attacks themselves require epsilon > 0.
  void validate() const;
};

/// In-memory dataset: train/test stored contiguously, plus class count and
/// the retained fraction of the original training split.
struct DatasetSplit {
  LabeledBatch train;
  LabeledBatch test;
  int num_classes = 0;
  double fraction = 1.0;
};

}  // namespace conrad
