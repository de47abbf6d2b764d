#include "doctest.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "conrad/augment.hpp"
#include "conrad/dataset.hpp"
#include "conrad/rng.hpp"

using namespace conrad;

namespace {

ImageBatch ones_batch(std::int64_t n = 1, std::int64_t hw = 32) {
  return ImageBatch(Tensor::full({n, 3, hw, hw}, 1.0f));
}

ImageBatch random_batch(Rng& rng, std::int64_t n = 2, std::int64_t hw = 32) {
  Tensor t({n, 3, hw, hw});
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.next_float();
  return ImageBatch(std::move(t));
}

Transform single_op(AugKind kind, double magnitude, Transform::Instance inst) {
  Transform t;
  Transform::ResolvedOp ro;
  ro.kind = kind;
  ro.magnitude = magnitude;
  ro.per_image = {inst};
  t.ops.push_back(ro);
  return t;
}

bool batches_equal(const ImageBatch& a, const ImageBatch& b) {
  if (!a.data.same_shape(b.data)) return false;
  for (std::int64_t i = 0; i < a.data.numel(); ++i)
    if (a.data[i] != b.data[i]) return false;
  return true;
}

}  // namespace

TEST_SUITE("augment ops") {
  TEST_CASE("identity policy always yields identity transform") {
    Rng rng(3, 0);
    ImageBatch x = random_batch(rng);
    for (int i = 0; i < 5; ++i) {
      Transform t = sample_transform(AugmentPolicy::named(PolicyName::None), rng.split(i));
      CHECK(t.is_identity());
      CHECK(batches_equal(t(x), x));
    }
  }

  TEST_CASE("cutout zero count with known center") {
    Transform::Instance center;
    center.f0 = 0.5f;  // cy = 16
    center.f1 = 0.5f;  // cx = 16
    ImageBatch out = single_op(AugKind::Cutout, 0, center)(ones_batch());
    // 16x16 square fully inside: rows/cols [8,24)
    std::int64_t zeros = 0;
    for (std::int64_t i = 0; i < out.data.numel(); ++i) zeros += out.data[i] == 0.0f;
    CHECK(zeros == 3 * 256);
    // contiguity: zeroed iff inside the square
    for (std::int64_t h = 0; h < 32; ++h)
      for (std::int64_t w = 0; w < 32; ++w) {
        const bool inside = h >= 8 && h < 24 && w >= 8 && w < 24;
        CHECK(out.data.at4(0, 0, h, w) == (inside ? 0.0f : 1.0f));
      }

    Transform::Instance corner;  // cy = cx = 0 -> clipped to 8x8
    ImageBatch clipped = single_op(AugKind::Cutout, 0, corner)(ones_batch());
    std::int64_t zeros2 = 0;
    for (std::int64_t i = 0; i < clipped.data.numel(); ++i) zeros2 += clipped.data[i] == 0.0f;
    CHECK(zeros2 == 3 * 64);
    CHECK(zeros2 >= 0);
    CHECK(zeros2 <= 3 * 256);
  }

  TEST_CASE("hflip is an involution") {
    Rng rng(5, 0);
    ImageBatch x = random_batch(rng);
    Transform flip = single_op(AugKind::HFlip, 0, Transform::Instance{});
    CHECK(batches_equal(flip(flip(x)), x));
    CHECK_FALSE(batches_equal(flip(x), x));
  }

  TEST_CASE("crop_pad with forced zero offset shifts by the pad amount") {
    Rng rng(7, 0);
    ImageBatch x = random_batch(rng, 1);
    Transform::Instance inst;
    inst.i0 = 0;
    inst.i1 = 0;
    ImageBatch out = single_op(AugKind::CropPad, 4, inst)(x);
    for (std::int64_t h = 0; h < 32; ++h)
      for (std::int64_t w = 0; w < 32; ++w) {
        const float expect = (h >= 4 && w >= 4) ? x.data.at4(0, 1, h - 4, w - 4) : 0.0f;
        CHECK(out.data.at4(0, 1, h, w) == expect);
      }
    // centered offset (pad, pad) is the identity
    inst.i0 = 4;
    inst.i1 = 4;
    CHECK(batches_equal(single_op(AugKind::CropPad, 4, inst)(x), x));
  }

  TEST_CASE("every op kind preserves shape and [0,1] range") {
    Rng rng(11, 0);
    ImageBatch x = random_batch(rng, 3);
    std::vector<AugmentOp> all = {
        AugmentOp::make(AugKind::CropPad, 4, 1.0),
        AugmentOp::make(AugKind::HFlip, 0, 1.0),
        AugmentOp::make(AugKind::Cutout, 8, 1.0),
        AugmentOp::make(AugKind::ColorJitter, 0.8, 1.0),
        AugmentOp::make(AugKind::Grayscale, 0, 1.0),
        AugmentOp::make(AugKind::Rotate90, 0, 1.0),
        AugmentOp::make(AugKind::GaussianBlur, 0, 1.0),
    };
    for (const AugmentOp& op : all) {
      AugmentPolicy p = AugmentPolicy::custom({op});
      for (int trial = 0; trial < 3; ++trial) {
        Transform t = sample_transform(p, rng.split(trial), x.count());
        ImageBatch out = t(x);
        CHECK(out.data.same_shape(x.data));
        out.validate();
      }
    }
    // autoaugment applies everything in the table
    AugmentPolicy aa = AugmentPolicy::named(PolicyName::AutoAugment);
    for (int trial = 0; trial < 30; ++trial) {
      ImageBatch out = sample_transform(aa, rng.split(100 + trial), x.count())(x);
      CHECK(out.data.same_shape(x.data));
      out.validate();
    }
  }

  TEST_CASE("malformed magnitudes are rejected at construction") {
    CHECK_THROWS_AS((void)AugmentOp::make(AugKind::CropPad, 0.5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS((void)AugmentOp::make(AugKind::ColorJitter, 1.5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS((void)AugmentOp::make(AugKind::HFlip, 3, 0.5), std::invalid_argument);
    CHECK_THROWS_AS((void)AugmentOp::make(AugKind::Cutout, 7.5, 1.0), std::invalid_argument);
    CHECK_THROWS_AS((void)AugmentOp::make(AugKind::HFlip, 0, 1.5), std::invalid_argument);
  }
}

TEST_SUITE("policy sampling") {
  TEST_CASE("sampling is deterministic in (policy, rng)") {
    AugmentPolicy p = AugmentPolicy::named(PolicyName::AutoAugment);
    Rng rng(21, 9);
    ImageBatch x = random_batch(rng, 2);
    Transform a = sample_transform(p, Rng(21, 9), 2);
    Transform b = sample_transform(p, Rng(21, 9), 2);
    CHECK(batches_equal(a(x), b(x)));
  }

  TEST_CASE("autoaugment sequence ends with crop_pad, hflip, cutout") {
    Transform t = sample_transform(AugmentPolicy::named(PolicyName::AutoAugment), Rng(1, 2));
    REQUIRE(t.ops.size() == 5);
    CHECK(t.ops[0].kind == AugKind::AutoaugSubop);
    CHECK(t.ops[1].kind == AugKind::AutoaugSubop);
    CHECK(t.ops[2].kind == AugKind::CropPad);
    CHECK(t.ops[3].kind == AugKind::HFlip);
    CHECK(t.ops[4].kind == AugKind::Cutout);
  }

  TEST_CASE("identity sub-policy recovers base+cutout") {
    AugmentPolicy aa = AugmentPolicy::named(PolicyName::AutoAugment);
    aa.sub_policies = {SubPolicy{Subop{SubopKind::Identity, 0.0, 0}, Subop{SubopKind::Identity, 0.0, 0}}};
    AugmentPolicy bc = AugmentPolicy::named(PolicyName::BaseCutout);
    Rng rng(33, 1);
    ImageBatch x = random_batch(rng, 2);
    for (int trial = 0; trial < 4; ++trial) {
      Rng r(77, static_cast<std::uint64_t>(trial));
      ImageBatch via_aa = sample_transform(aa, r, 2)(x);
      ImageBatch via_bc = sample_transform(bc, r, 2)(x);
      CHECK(batches_equal(via_aa, via_bc));
    }
  }

  TEST_CASE("crop offsets chi-square over 1e4 draws") {
    AugmentPolicy p = AugmentPolicy::named(PolicyName::Base);
    std::vector<int> counts(81, 0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
      Transform t = sample_transform(p, Rng(500, static_cast<std::uint64_t>(i)));
      const auto& inst = t.ops[0].per_image[0];
      counts[static_cast<std::size_t>(inst.i0 * 9 + inst.i1)]++;
    }
    const double expect = static_cast<double>(n) / 81.0;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
    // df = 80; 124.8 is the 0.1% critical value
    CHECK(chi2 < 124.8);
    CHECK(chi2 > 40.0);
  }

  TEST_CASE("sample_pair draws independently and reproducibly") {
    AugmentPolicy p = AugmentPolicy::named(PolicyName::Base);
    const int n = 10000;
    int collisions = 0;
    for (int i = 0; i < n; ++i) {
      auto [t1, t2] = sample_pair(p, Rng(900, static_cast<std::uint64_t>(i)));
      const auto& a = t1.ops;
      const auto& b = t2.ops;
      const bool same_crop = a[0].per_image[0].i0 == b[0].per_image[0].i0 &&
                             a[0].per_image[0].i1 == b[0].per_image[0].i1;
      const bool same_flip = a[1].per_image[0].enabled == b[1].per_image[0].enabled;
      collisions += same_crop && same_flip;
    }
    // independence: P(collision) = 1/(81*2); 3 sigma band around n*p
    const double mean = n / 162.0;
    const double sigma = std::sqrt(n * (1.0 / 162.0) * (1.0 - 1.0 / 162.0));
    CHECK(std::abs(collisions - mean) < 3.0 * sigma);

    auto [p1, p2] = sample_pair(p, Rng(4, 4));
    auto [q1, q2] = sample_pair(p, Rng(4, 4));
    Rng rng(1, 1);
    ImageBatch x = random_batch(rng);
    CHECK(batches_equal(p1(x), q1(x)));
    CHECK(batches_equal(p2(x), q2(x)));
  }

  TEST_CASE("policy name parsing") {
    CHECK(policy_name_from_str("base+cutout") == PolicyName::BaseCutout);
    CHECK(policy_name_str(PolicyName::AutoAugment) == "autoaugment");
    CHECK_THROWS_AS((void)policy_name_from_str("mixup"), std::invalid_argument);
    CHECK(autoaugment_cifar10_policy().size() == 25);
  }

  TEST_CASE("per-image parameters differ across the batch") {
    AugmentPolicy p = AugmentPolicy::named(PolicyName::Base);
    Transform t = sample_transform(p, Rng(2, 2), 64);
    const auto& crop = t.ops[0].per_image;
    bool any_differs = false;
    for (std::size_t i = 1; i < crop.size(); ++i)
      any_differs |= crop[i].i0 != crop[0].i0 || crop[i].i1 != crop[0].i1;
    CHECK(any_differs);
    // strict size check on mismatched application
    Rng rng(6, 0);
    ImageBatch x = random_batch(rng, 2);
    CHECK_THROWS_AS((void)t(x), std::invalid_argument);
  }
}
