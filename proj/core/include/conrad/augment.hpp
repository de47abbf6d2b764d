#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "conrad/rng.hpp"
#include "conrad/types.hpp"

namespace conrad {

enum class AugKind {
  Identity,
  CropPad,
  HFlip,
  Cutout,
  ColorJitter,
  Grayscale,
  Rotate90,
  GaussianBlur,
  AutoaugSubop,
};

std::string aug_kind_name(AugKind k);
AugKind aug_kind_from_name(const std::string& name);

/// One member of the augmentation family. `magnitude` is op-specific:
/// CropPad = padding in pixels, Cutout = square side (0 means "half the
/// image width at apply time"), ColorJitter = jitter strength, others unused.
struct AugmentOp {
  AugKind kind = AugKind::Identity;
  double magnitude = 0.0;
  double probability = 1.0;

  /// Construction is the only place malformed magnitudes are rejected;
  /// application never silently falls back to identity.
  static AugmentOp make(AugKind kind, double magnitude, double probability);
};

/// PIL-style sub-operations used by the fixed AutoAugment policy table.
/// Magnitude bins 0..9 map linearly onto the documented ranges.
enum class SubopKind {
  ShearX,
  ShearY,
  TranslateX,
  TranslateY,
  Rotate,
  AutoContrast,
  Invert,
  Equalize,
  Solarize,
  Posterize,
  Contrast,
  Color,
  Brightness,
  Sharpness,
  Identity,
};

std::string subop_name(SubopKind k);

struct Subop {
  SubopKind kind = SubopKind::Identity;
  double probability = 0.0;
  int magnitude_bin = 0;
};

using SubPolicy = std::array<Subop, 2>;

/// The fixed published CIFAR-10 policy: 25 sub-policies of two
/// (op, probability, magnitude) entries.
const std::vector<SubPolicy>& autoaugment_cifar10_policy();

enum class PolicyName { None, Base, BaseCutout, BaseColor, AutoAugment, Custom };

std::string policy_name_str(PolicyName p);
PolicyName policy_name_from_str(const std::string& s);

/// A distribution over transforms. Sampling is a pure function of
/// (policy, rng); the autoaugment policy always appends the base ops and
/// Cutout after the sampled sub-policy.
struct AugmentPolicy {
  PolicyName name = PolicyName::None;
  std::vector<AugmentOp> ops;
  std::vector<SubPolicy> sub_policies;

  static AugmentPolicy named(PolicyName name);
  static AugmentPolicy named(const std::string& name);
  static AugmentPolicy custom(std::vector<AugmentOp> ops);
};

/// A transform with every random choice already made, so applying it is
/// deterministic and its parameters can be recorded for reproducibility.
/// Parameters are resolved per image slot: a transform sampled with
/// image_count == 1 broadcasts to any batch, otherwise the batch size must
/// match exactly.
class Transform {
 public:
  struct Instance {
    bool enabled = true;
    float f0 = 0.0f, f1 = 0.0f, f2 = 0.0f;
    int i0 = 0, i1 = 0;
  };
  struct ResolvedOp {
    AugKind kind = AugKind::Identity;
    SubopKind subop = SubopKind::Identity;
    double magnitude = 0.0;
    std::vector<Instance> per_image;
  };

  std::vector<ResolvedOp> ops;

  ImageBatch operator()(const ImageBatch& batch) const;
  bool is_identity() const { return ops.empty(); }
  std::int64_t image_count() const { return ops.empty() ? 1 : static_cast<std::int64_t>(ops.front().per_image.size()); }
  std::string describe() const;
};

/// Draw one concrete transform. All randomness is consumed here.
Transform sample_transform(const AugmentPolicy& policy, Rng rng, std::int64_t image_count = 1);

/// Draw two transforms from independent rng sub-streams.
std::pair<Transform, Transform> sample_pair(const AugmentPolicy& policy, Rng rng,
                                            std::int64_t image_count = 1);

}  // namespace conrad
