#include "conrad/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace conrad {

namespace {

constexpr float kPi = static_cast<float>(std::numbers::pi);

// ---- single-image primitives; img is one CHW image, values in [0,1] ----

struct View {
  float* px;
  std::int64_t C, H, W;
  float& at(std::int64_t c, std::int64_t h, std::int64_t w) { return px[(c * H + h) * W + w]; }
  float at(std::int64_t c, std::int64_t h, std::int64_t w) const { return px[(c * H + h) * W + w]; }
  std::int64_t numel() const { return C * H * W; }
};

void clamp01(View img) {
  for (std::int64_t i = 0; i < img.numel(); ++i)
    img.px[i] = std::min(1.0f, std::max(0.0f, img.px[i]));
}

// Inverse-map affine resample with bilinear filtering and zero fill.
// For output (x, y) the source is (m0*x + m1*y + m2, m3*x + m4*y + m5).
void affine(View img, const std::array<float, 6>& m) {
  std::vector<float> out(static_cast<std::size_t>(img.numel()));
  for (std::int64_t y = 0; y < img.H; ++y) {
    for (std::int64_t x = 0; x < img.W; ++x) {
      const float sx = m[0] * static_cast<float>(x) + m[1] * static_cast<float>(y) + m[2];
      const float sy = m[3] * static_cast<float>(x) + m[4] * static_cast<float>(y) + m[5];
      const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
      const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
      const float fx = sx - static_cast<float>(x0);
      const float fy = sy - static_cast<float>(y0);
      for (std::int64_t c = 0; c < img.C; ++c) {
        auto tap = [&](std::int64_t yy, std::int64_t xx) -> float {
          if (yy < 0 || yy >= img.H || xx < 0 || xx >= img.W) return 0.0f;
          return img.at(c, yy, xx);
        };
        const float v = (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                        fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
        out[static_cast<std::size_t>((c * img.H + y) * img.W + x)] = v;
      }
    }
  }
  std::copy(out.begin(), out.end(), img.px);
}

void crop_pad(View img, int pad, int oy, int ox) {
  std::vector<float> out(static_cast<std::size_t>(img.numel()), 0.0f);
  for (std::int64_t c = 0; c < img.C; ++c)
    for (std::int64_t h = 0; h < img.H; ++h)
      for (std::int64_t w = 0; w < img.W; ++w) {
        const std::int64_t sh = h + oy - pad;
        const std::int64_t sw = w + ox - pad;
        if (sh >= 0 && sh < img.H && sw >= 0 && sw < img.W)
          out[static_cast<std::size_t>((c * img.H + h) * img.W + w)] = img.at(c, sh, sw);
      }
  std::copy(out.begin(), out.end(), img.px);
}

void hflip(View img) {
  for (std::int64_t c = 0; c < img.C; ++c)
    for (std::int64_t h = 0; h < img.H; ++h)
      for (std::int64_t w = 0; w < img.W / 2; ++w)
        std::swap(img.at(c, h, w), img.at(c, h, img.W - 1 - w));
}

void cutout(View img, int size, int cy, int cx) {
  const std::int64_t y0 = std::max<std::int64_t>(0, cy - size / 2);
  const std::int64_t x0 = std::max<std::int64_t>(0, cx - size / 2);
  const std::int64_t y1 = std::min<std::int64_t>(img.H, cy - size / 2 + size);
  const std::int64_t x1 = std::min<std::int64_t>(img.W, cx - size / 2 + size);
  for (std::int64_t c = 0; c < img.C; ++c)
    for (std::int64_t h = y0; h < y1; ++h)
      for (std::int64_t w = x0; w < x1; ++w) img.at(c, h, w) = 0.0f;
}

void rotate90(View img, int quarter_turns) {
  if (img.H != img.W) throw std::invalid_argument("rotate90 needs square images");
  const std::int64_t n = img.H;
  std::vector<float> out(static_cast<std::size_t>(img.numel()));
  for (std::int64_t c = 0; c < img.C; ++c)
    for (std::int64_t h = 0; h < n; ++h)
      for (std::int64_t w = 0; w < n; ++w) {
        float v = 0.0f;
        switch (quarter_turns) {
          case 1: v = img.at(c, w, n - 1 - h); break;
          case 2: v = img.at(c, n - 1 - h, n - 1 - w); break;
          case 3: v = img.at(c, n - 1 - w, h); break;
          default: throw std::logic_error("rotate90 turns must be 1..3");
        }
        out[static_cast<std::size_t>((c * n + h) * n + w)] = v;
      }
  std::copy(out.begin(), out.end(), img.px);
}

void gaussian_blur3(View img, float sigma) {
  const float w1 = std::exp(-1.0f / (2.0f * sigma * sigma));
  const float w2 = std::exp(-2.0f / (2.0f * sigma * sigma));
  const float norm = 1.0f + 4.0f * w1 + 4.0f * w2;
  std::vector<float> out(static_cast<std::size_t>(img.numel()));
  auto tap = [&](std::int64_t c, std::int64_t h, std::int64_t w) -> float {
    // replicate border
    h = std::clamp<std::int64_t>(h, 0, img.H - 1);
    w = std::clamp<std::int64_t>(w, 0, img.W - 1);
    return img.at(c, h, w);
  };
  for (std::int64_t c = 0; c < img.C; ++c)
    for (std::int64_t h = 0; h < img.H; ++h)
      for (std::int64_t w = 0; w < img.W; ++w) {
        const float v = tap(c, h, w) +
                        w1 * (tap(c, h - 1, w) + tap(c, h + 1, w) + tap(c, h, w - 1) + tap(c, h, w + 1)) +
                        w2 * (tap(c, h - 1, w - 1) + tap(c, h - 1, w + 1) + tap(c, h + 1, w - 1) +
                              tap(c, h + 1, w + 1));
        out[static_cast<std::size_t>((c * img.H + h) * img.W + w)] = v / norm;
      }
  std::copy(out.begin(), out.end(), img.px);
}

void luminance(const View& img, std::vector<float>& gray) {
  gray.resize(static_cast<std::size_t>(img.H * img.W));
  for (std::int64_t h = 0; h < img.H; ++h)
    for (std::int64_t w = 0; w < img.W; ++w) {
      float v;
      if (img.C == 3)
        v = 0.299f * img.at(0, h, w) + 0.587f * img.at(1, h, w) + 0.114f * img.at(2, h, w);
      else
        v = img.at(0, h, w);
      gray[static_cast<std::size_t>(h * img.W + w)] = v;
    }
}

void to_grayscale(View img) {
  std::vector<float> gray;
  luminance(img, gray);
  for (std::int64_t c = 0; c < img.C; ++c)
    for (std::int64_t i = 0; i < img.H * img.W; ++i)
      img.px[c * img.H * img.W + i] = gray[static_cast<std::size_t>(i)];
}

// blend(degenerate, image, factor) = degenerate + factor * (image - degenerate)
void enhance_brightness(View img, float factor) {
  for (std::int64_t i = 0; i < img.numel(); ++i) img.px[i] *= factor;
  clamp01(img);
}

void enhance_contrast(View img, float factor) {
  std::vector<float> gray;
  luminance(img, gray);
  double mean = 0.0;
  for (float g : gray) mean += g;
  const float m = static_cast<float>(mean / static_cast<double>(gray.size()));
  for (std::int64_t i = 0; i < img.numel(); ++i) img.px[i] = m + factor * (img.px[i] - m);
  clamp01(img);
}

void enhance_color(View img, float factor) {
  std::vector<float> gray;
  luminance(img, gray);
  for (std::int64_t c = 0; c < img.C; ++c)
    for (std::int64_t i = 0; i < img.H * img.W; ++i) {
      float& v = img.px[c * img.H * img.W + i];
      v = gray[static_cast<std::size_t>(i)] + factor * (v - gray[static_cast<std::size_t>(i)]);
    }
  clamp01(img);
}

void enhance_sharpness(View img, float factor) {
  // Degenerate image: 3x3 smooth kernel [[1,1,1],[1,5,1],[1,1,1]]/13 applied
  // to the interior; border rows and columns stay unchanged.
  std::vector<float> smooth(img.px, img.px + img.numel());
  for (std::int64_t c = 0; c < img.C; ++c)
    for (std::int64_t h = 1; h + 1 < img.H; ++h)
      for (std::int64_t w = 1; w + 1 < img.W; ++w) {
        float acc = 5.0f * img.at(c, h, w);
        acc += img.at(c, h - 1, w - 1) + img.at(c, h - 1, w) + img.at(c, h - 1, w + 1);
        acc += img.at(c, h, w - 1) + img.at(c, h, w + 1);
        acc += img.at(c, h + 1, w - 1) + img.at(c, h + 1, w) + img.at(c, h + 1, w + 1);
        smooth[static_cast<std::size_t>((c * img.H + h) * img.W + w)] = acc / 13.0f;
      }
  for (std::int64_t i = 0; i < img.numel(); ++i)
    img.px[i] = smooth[static_cast<std::size_t>(i)] + factor * (img.px[i] - smooth[static_cast<std::size_t>(i)]);
  clamp01(img);
}

void invert(View img) {
  for (std::int64_t i = 0; i < img.numel(); ++i) img.px[i] = 1.0f - img.px[i];
}

void solarize(View img, float threshold) {
  for (std::int64_t i = 0; i < img.numel(); ++i)
    if (img.px[i] >= threshold) img.px[i] = 1.0f - img.px[i];
}

void posterize(View img, int bits) {
  const int shift = 8 - bits;
  for (std::int64_t i = 0; i < img.numel(); ++i) {
    int byte = static_cast<int>(std::lround(img.px[i] * 255.0f));
    byte = std::clamp(byte, 0, 255);
    byte = (byte >> shift) << shift;
    img.px[i] = static_cast<float>(byte) / 255.0f;
  }
}

void autocontrast(View img) {
  for (std::int64_t c = 0; c < img.C; ++c) {
    float lo = 1.0f, hi = 0.0f;
    for (std::int64_t i = 0; i < img.H * img.W; ++i) {
      const float v = img.px[c * img.H * img.W + i];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi > lo)
      for (std::int64_t i = 0; i < img.H * img.W; ++i) {
        float& v = img.px[c * img.H * img.W + i];
        v = (v - lo) / (hi - lo);
      }
  }
}

void equalize(View img) {
  // Histogram equalization on byte-quantized values, matching the classic
  // cumulative-lut construction.
  for (std::int64_t c = 0; c < img.C; ++c) {
    std::array<int, 256> hist{};
    const std::int64_t n = img.H * img.W;
    for (std::int64_t i = 0; i < n; ++i) {
      int byte = static_cast<int>(std::lround(img.px[c * n + i] * 255.0f));
      hist[static_cast<std::size_t>(std::clamp(byte, 0, 255))]++;
    }
    long total = 0;
    for (int h : hist) total += h;
    const long step = (total - hist[255]) / 255;
    if (step == 0) continue;
    std::array<int, 256> lut{};
    long acc = step / 2;
    for (int i = 0; i < 256; ++i) {
      lut[static_cast<std::size_t>(i)] = static_cast<int>(std::clamp<long>(acc / step, 0, 255));
      acc += hist[static_cast<std::size_t>(i)];
    }
    for (std::int64_t i = 0; i < n; ++i) {
      int byte = static_cast<int>(std::lround(img.px[c * n + i] * 255.0f));
      img.px[c * n + i] = static_cast<float>(lut[static_cast<std::size_t>(std::clamp(byte, 0, 255))]) / 255.0f;
    }
  }
}

void shear_x(View img, float s) { affine(img, {1, s, 0, 0, 1, 0}); }
void shear_y(View img, float s) { affine(img, {1, 0, 0, s, 1, 0}); }
void translate_x(View img, float t) { affine(img, {1, 0, t, 0, 1, 0}); }
void translate_y(View img, float t) { affine(img, {1, 0, 0, 0, 1, t}); }

void rotate_deg(View img, float degrees) {
  const float a = degrees * kPi / 180.0f;
  const float cx = static_cast<float>(img.W - 1) / 2.0f;
  const float cy = static_cast<float>(img.H - 1) / 2.0f;
  const float c = std::cos(a), s = std::sin(a);
  affine(img, {c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy});
}

// ---- magnitude bins ----

float bin_to_range(int bin, float max_value) {
  return max_value * static_cast<float>(bin) / 9.0f;
}

float enhance_factor(int bin) { return 0.1f + 1.8f * static_cast<float>(bin) / 9.0f; }

// ---- rng slot layout; fixed so that policies sharing a suffix of standard
// ops draw identical parameters from identical streams ----

std::uint64_t slot_for(AugKind kind, int occurrence) {
  return static_cast<std::uint64_t>(kind) + 1 + 16ull * static_cast<std::uint64_t>(occurrence);
}
constexpr std::uint64_t kSubPolicySlot = 600;
constexpr std::uint64_t kSubopSlot0 = 610;

}  // namespace

std::string aug_kind_name(AugKind k) {
  switch (k) {
    case AugKind::Identity: return "identity";
    case AugKind::CropPad: return "crop_pad";
    case AugKind::HFlip: return "hflip";
    case AugKind::Cutout: return "cutout";
    case AugKind::ColorJitter: return "color_jitter";
    case AugKind::Grayscale: return "grayscale";
    case AugKind::Rotate90: return "rotate90";
    case AugKind::GaussianBlur: return "gaussian_blur";
    case AugKind::AutoaugSubop: return "autoaug_subop";
  }
  throw std::logic_error("unreachable aug kind");
}

AugKind aug_kind_from_name(const std::string& name) {
  for (AugKind k : {AugKind::Identity, AugKind::CropPad, AugKind::HFlip, AugKind::Cutout,
                    AugKind::ColorJitter, AugKind::Grayscale, AugKind::Rotate90,
                    AugKind::GaussianBlur, AugKind::AutoaugSubop})
    if (aug_kind_name(k) == name) return k;
  throw std::invalid_argument("unknown augmentation kind: " + name);
}

std::string subop_name(SubopKind k) {
  switch (k) {
    case SubopKind::ShearX: return "shear_x";
    case SubopKind::ShearY: return "shear_y";
    case SubopKind::TranslateX: return "translate_x";
    case SubopKind::TranslateY: return "translate_y";
    case SubopKind::Rotate: return "rotate";
    case SubopKind::AutoContrast: return "autocontrast";
    case SubopKind::Invert: return "invert";
    case SubopKind::Equalize: return "equalize";
    case SubopKind::Solarize: return "solarize";
    case SubopKind::Posterize: return "posterize";
    case SubopKind::Contrast: return "contrast";
    case SubopKind::Color: return "color";
    case SubopKind::Brightness: return "brightness";
    case SubopKind::Sharpness: return "sharpness";
    case SubopKind::Identity: return "identity";
  }
  throw std::logic_error("unreachable subop kind");
}

AugmentOp AugmentOp::make(AugKind kind, double magnitude, double probability) {
  if (!(probability >= 0.0 && probability <= 1.0))
    throw std::invalid_argument("augment probability must be in [0,1]");
  auto require = [&](bool ok, const char* what) {
    if (!ok)
      throw std::invalid_argument(std::string("bad magnitude for ") + aug_kind_name(kind) + ": " + what);
  };
  switch (kind) {
    case AugKind::CropPad:
      require(magnitude >= 1 && magnitude <= 16 && magnitude == std::floor(magnitude),
              "expect integer padding in [1,16]");
      break;
    case AugKind::Cutout:
      require(magnitude == 0 || (magnitude >= 1 && magnitude <= 64 && magnitude == std::floor(magnitude)),
              "expect 0 (half width) or integer side in [1,64]");
      break;
    case AugKind::ColorJitter:
      require(magnitude > 0 && magnitude < 1, "expect strength in (0,1)");
      break;
    case AugKind::Identity:
    case AugKind::HFlip:
    case AugKind::Grayscale:
    case AugKind::Rotate90:
    case AugKind::GaussianBlur:
    case AugKind::AutoaugSubop:
      require(magnitude == 0, "expect 0");
      break;
  }
  return AugmentOp{kind, magnitude, probability};
}

const std::vector<SubPolicy>& autoaugment_cifar10_policy() {
  using S = SubopKind;
  static const std::vector<SubPolicy> table = {
      {{{S::Invert, 0.1, 7}, {S::Contrast, 0.2, 6}}},
      {{{S::Rotate, 0.7, 2}, {S::TranslateX, 0.3, 9}}},
      {{{S::Sharpness, 0.8, 1}, {S::Sharpness, 0.9, 3}}},
      {{{S::ShearY, 0.5, 8}, {S::TranslateY, 0.7, 9}}},
      {{{S::AutoContrast, 0.5, 8}, {S::Equalize, 0.9, 2}}},
      {{{S::ShearY, 0.2, 7}, {S::Posterize, 0.3, 7}}},
      {{{S::Color, 0.4, 3}, {S::Brightness, 0.6, 7}}},
      {{{S::Sharpness, 0.3, 9}, {S::Brightness, 0.7, 9}}},
      {{{S::Equalize, 0.6, 5}, {S::Equalize, 0.5, 1}}},
      {{{S::Contrast, 0.6, 7}, {S::Sharpness, 0.6, 5}}},
      {{{S::Color, 0.7, 7}, {S::TranslateX, 0.5, 8}}},
      {{{S::Equalize, 0.3, 7}, {S::AutoContrast, 0.4, 8}}},
      {{{S::TranslateY, 0.4, 3}, {S::Sharpness, 0.2, 6}}},
      {{{S::Brightness, 0.9, 6}, {S::Color, 0.2, 8}}},
      {{{S::Solarize, 0.5, 2}, {S::Invert, 0.0, 3}}},
      {{{S::Equalize, 0.2, 0}, {S::AutoContrast, 0.6, 0}}},
      {{{S::Equalize, 0.2, 8}, {S::Equalize, 0.6, 4}}},
      {{{S::Color, 0.9, 9}, {S::Equalize, 0.6, 6}}},
      {{{S::AutoContrast, 0.8, 4}, {S::Solarize, 0.2, 8}}},
      {{{S::Brightness, 0.1, 3}, {S::Color, 0.7, 0}}},
      {{{S::Solarize, 0.4, 5}, {S::AutoContrast, 0.9, 3}}},
      {{{S::TranslateY, 0.9, 9}, {S::TranslateY, 0.7, 9}}},
      {{{S::AutoContrast, 0.9, 2}, {S::Solarize, 0.8, 3}}},
      {{{S::Equalize, 0.8, 8}, {S::Invert, 0.1, 3}}},
      {{{S::TranslateY, 0.7, 9}, {S::AutoContrast, 0.9, 1}}},
  };
  return table;
}

std::string policy_name_str(PolicyName p) {
  switch (p) {
    case PolicyName::None: return "none";
    case PolicyName::Base: return "base";
    case PolicyName::BaseCutout: return "base+cutout";
    case PolicyName::BaseColor: return "base+color";
    case PolicyName::AutoAugment: return "autoaugment";
    case PolicyName::Custom: return "custom";
  }
  throw std::logic_error("unreachable policy name");
}

PolicyName policy_name_from_str(const std::string& s) {
  for (PolicyName p : {PolicyName::None, PolicyName::Base, PolicyName::BaseCutout,
                       PolicyName::BaseColor, PolicyName::AutoAugment, PolicyName::Custom})
    if (policy_name_str(p) == s) return p;
  throw std::invalid_argument("unknown augmentation policy: " + s);
}

AugmentPolicy AugmentPolicy::named(PolicyName name) {
  AugmentPolicy p;
  p.name = name;
  auto base = [] {
    return std::vector<AugmentOp>{AugmentOp::make(AugKind::CropPad, 4, 1.0),
                                  AugmentOp::make(AugKind::HFlip, 0, 0.5)};
  };
  switch (name) {
    case PolicyName::None:
      break;
    case PolicyName::Base:
      p.ops = base();
      break;
    case PolicyName::BaseCutout:
      p.ops = base();
      p.ops.push_back(AugmentOp::make(AugKind::Cutout, 0, 1.0));
      break;
    case PolicyName::BaseColor:
      p.ops = base();
      p.ops.push_back(AugmentOp::make(AugKind::ColorJitter, 0.4, 0.8));
      p.ops.push_back(AugmentOp::make(AugKind::Grayscale, 0, 0.2));
      break;
    case PolicyName::AutoAugment:
      p.ops.push_back(AugmentOp::make(AugKind::AutoaugSubop, 0, 1.0));
      p.ops.push_back(AugmentOp::make(AugKind::CropPad, 4, 1.0));
      p.ops.push_back(AugmentOp::make(AugKind::HFlip, 0, 0.5));
      p.ops.push_back(AugmentOp::make(AugKind::Cutout, 0, 1.0));
      p.sub_policies = autoaugment_cifar10_policy();
      break;
    case PolicyName::Custom:
      throw std::invalid_argument("custom policy requires an explicit op list");
  }
  return p;
}

AugmentPolicy AugmentPolicy::named(const std::string& name) {
  return named(policy_name_from_str(name));
}

AugmentPolicy AugmentPolicy::custom(std::vector<AugmentOp> ops) {
  AugmentPolicy p;
  p.name = PolicyName::Custom;
  p.ops = std::move(ops);
  return p;
}

namespace {

Transform::Instance resolve_base_instance(AugKind kind, double magnitude, double probability,
                                          Rng& r) {
  Transform::Instance inst;
  inst.enabled = r.bernoulli(static_cast<float>(probability));
  switch (kind) {
    case AugKind::CropPad: {
      const int span = 2 * static_cast<int>(magnitude) + 1;
      inst.i0 = static_cast<int>(r.next_below(static_cast<std::uint64_t>(span)));
      inst.i1 = static_cast<int>(r.next_below(static_cast<std::uint64_t>(span)));
      break;
    }
    case AugKind::Cutout:
      // center as unit coordinates, mapped to pixels at apply time
      inst.f0 = r.next_float();
      inst.f1 = r.next_float();
      break;
    case AugKind::ColorJitter: {
      const float m = static_cast<float>(magnitude);
      inst.f0 = r.uniform(1.0f - m, 1.0f + m);
      inst.f1 = r.uniform(1.0f - m, 1.0f + m);
      inst.f2 = r.uniform(1.0f - m, 1.0f + m);
      break;
    }
    case AugKind::Rotate90:
      inst.i0 = 1 + static_cast<int>(r.next_below(3));
      break;
    case AugKind::GaussianBlur:
      inst.f0 = r.uniform(0.1f, 2.0f);
      break;
    case AugKind::HFlip:
    case AugKind::Grayscale:
    case AugKind::Identity:
    case AugKind::AutoaugSubop:
      break;
  }
  return inst;
}

Transform::Instance resolve_subop_instance(const Subop& sub, Rng& r) {
  Transform::Instance inst;
  inst.enabled = r.bernoulli(static_cast<float>(sub.probability));
  inst.i1 = static_cast<int>(sub.kind);
  const float sign = r.bernoulli(0.5f) ? 1.0f : -1.0f;
  switch (sub.kind) {
    case SubopKind::ShearX:
    case SubopKind::ShearY:
      inst.f0 = sign * bin_to_range(sub.magnitude_bin, 0.3f);
      break;
    case SubopKind::TranslateX:
    case SubopKind::TranslateY:
      inst.f0 = sign * bin_to_range(sub.magnitude_bin, 10.0f);
      break;
    case SubopKind::Rotate:
      inst.f0 = sign * bin_to_range(sub.magnitude_bin, 30.0f);
      break;
    case SubopKind::Solarize:
      inst.f0 = 1.0f - static_cast<float>(sub.magnitude_bin) / 9.0f;
      break;
    case SubopKind::Posterize:
      inst.i0 = static_cast<int>(std::lround(8.0 - 4.0 * sub.magnitude_bin / 9.0));
      break;
    case SubopKind::Contrast:
    case SubopKind::Color:
    case SubopKind::Brightness:
    case SubopKind::Sharpness:
      inst.f0 = enhance_factor(sub.magnitude_bin);
      break;
    case SubopKind::AutoContrast:
    case SubopKind::Invert:
    case SubopKind::Equalize:
    case SubopKind::Identity:
      break;
  }
  return inst;
}

}  // namespace

Transform sample_transform(const AugmentPolicy& policy, Rng rng, std::int64_t image_count) {
  if (image_count < 1) throw std::invalid_argument("image_count must be >= 1");
  Transform t;
  std::array<int, 16> occurrence{};
  for (const AugmentOp& op : policy.ops) {
    if (op.kind == AugKind::AutoaugSubop) {
      if (policy.sub_policies.empty())
        throw std::invalid_argument("autoaug_subop needs a sub-policy table");
      // Each image draws its own sub-policy; the two resolved slots carry the
      // chosen sub-operation per image.
      Rng pick_rng = rng.split(kSubPolicySlot);
      std::vector<std::size_t> chosen(static_cast<std::size_t>(image_count));
      for (std::int64_t j = 0; j < image_count; ++j)
        chosen[static_cast<std::size_t>(j)] = static_cast<std::size_t>(
            pick_rng.split(static_cast<std::uint64_t>(j)).next_below(policy.sub_policies.size()));
      for (int slot = 0; slot < 2; ++slot) {
        Transform::ResolvedOp ro;
        ro.kind = AugKind::AutoaugSubop;
        Rng slot_rng = rng.split(kSubopSlot0 + static_cast<std::uint64_t>(slot));
        for (std::int64_t j = 0; j < image_count; ++j) {
          Rng r = slot_rng.split(static_cast<std::uint64_t>(j));
          const Subop& sub =
              policy.sub_policies[chosen[static_cast<std::size_t>(j)]][static_cast<std::size_t>(slot)];
          ro.per_image.push_back(resolve_subop_instance(sub, r));
        }
        t.ops.push_back(std::move(ro));
      }
      continue;
    }
    if (op.kind == AugKind::Identity) continue;

    Transform::ResolvedOp ro;
    ro.kind = op.kind;
    ro.magnitude = op.magnitude;
    const int occ = occurrence[static_cast<std::size_t>(op.kind)]++;
    Rng op_rng = rng.split(slot_for(op.kind, occ));
    for (std::int64_t j = 0; j < image_count; ++j) {
      Rng r = op_rng.split(static_cast<std::uint64_t>(j));
      ro.per_image.push_back(resolve_base_instance(op.kind, op.magnitude, op.probability, r));
    }
    t.ops.push_back(std::move(ro));
  }
  return t;
}

std::pair<Transform, Transform> sample_pair(const AugmentPolicy& policy, Rng rng,
                                            std::int64_t image_count) {
  return {sample_transform(policy, rng.split(0), image_count),
          sample_transform(policy, rng.split(1), image_count)};
}

ImageBatch Transform::operator()(const ImageBatch& batch) const {
  ImageBatch out = batch;
  const std::int64_t n = out.count();
  const std::int64_t C = out.channels(), H = out.height(), W = out.width();
  const std::int64_t stride = C * H * W;

  for (const ResolvedOp& ro : ops) {
    const std::int64_t params = static_cast<std::int64_t>(ro.per_image.size());
    if (params != 1 && params != n)
      throw std::invalid_argument("transform resolved for " + std::to_string(params) +
                                  " images applied to batch of " + std::to_string(n));
    for (std::int64_t j = 0; j < n; ++j) {
      const Instance& inst = ro.per_image[static_cast<std::size_t>(params == 1 ? 0 : j)];
      if (!inst.enabled) continue;
      View img{out.data.data() + j * stride, C, H, W};
      switch (ro.kind) {
        case AugKind::CropPad:
          crop_pad(img, static_cast<int>(ro.magnitude), inst.i0, inst.i1);
          break;
        case AugKind::HFlip:
          hflip(img);
          break;
        case AugKind::Cutout: {
          const int size = ro.magnitude == 0 ? static_cast<int>(W / 2) : static_cast<int>(ro.magnitude);
          const int cy = std::min<int>(static_cast<int>(H) - 1, static_cast<int>(inst.f0 * static_cast<float>(H)));
          const int cx = std::min<int>(static_cast<int>(W) - 1, static_cast<int>(inst.f1 * static_cast<float>(W)));
          cutout(img, size, cy, cx);
          break;
        }
        case AugKind::ColorJitter:
          enhance_brightness(img, inst.f0);
          enhance_contrast(img, inst.f1);
          enhance_color(img, inst.f2);
          break;
        case AugKind::Grayscale:
          to_grayscale(img);
          break;
        case AugKind::Rotate90:
          rotate90(img, inst.i0);
          break;
        case AugKind::GaussianBlur:
          gaussian_blur3(img, inst.f0);
          break;
        case AugKind::AutoaugSubop:
          switch (static_cast<SubopKind>(inst.i1)) {
            case SubopKind::ShearX: shear_x(img, inst.f0); break;
            case SubopKind::ShearY: shear_y(img, inst.f0); break;
            case SubopKind::TranslateX: translate_x(img, inst.f0); break;
            case SubopKind::TranslateY: translate_y(img, inst.f0); break;
            case SubopKind::Rotate: rotate_deg(img, inst.f0); break;
            case SubopKind::AutoContrast: autocontrast(img); break;
            case SubopKind::Invert: invert(img); break;
            case SubopKind::Equalize: equalize(img); break;
            case SubopKind::Solarize: solarize(img, inst.f0); break;
            case SubopKind::Posterize: posterize(img, inst.i0); break;
            case SubopKind::Contrast: enhance_contrast(img, inst.f0); break;
            case SubopKind::Color: enhance_color(img, inst.f0); break;
            case SubopKind::Brightness: enhance_brightness(img, inst.f0); break;
            case SubopKind::Sharpness: enhance_sharpness(img, inst.f0); break;
            case SubopKind::Identity: break;
          }
          break;
        case AugKind::Identity:
          break;
      }
    }
  }
  return out;
}

std::string Transform::describe() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    if (i) os << ';';
    if (ops[i].kind == AugKind::AutoaugSubop) {
      os << "subop[" << subop_name(static_cast<SubopKind>(ops[i].per_image.front().i1)) << "...]";
    } else {
      os << aug_kind_name(ops[i].kind);
    }
  }
  return os.str().empty() ? "identity" : os.str();
}

}  // namespace conrad
