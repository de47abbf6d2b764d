#include "conrad/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace fs = std::filesystem;

namespace conrad {

namespace {

constexpr std::int64_t kCifarRecord = 3073;
constexpr std::int64_t kCifarPixels = 3072;

std::string cifar_dir(const std::string& root) {
  if (fs::exists(fs::path(root) / "data_batch_1.bin")) return root;
  return (fs::path(root) / "cifar-10-batches-bin").string();
}

void read_cifar_file(const std::string& path, Tensor& images, std::vector<std::int32_t>& labels,
                     std::int64_t offset) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open CIFAR-10 file: " + path);
  std::vector<unsigned char> record(kCifarRecord);
  std::int64_t i = offset;
  while (f.read(reinterpret_cast<char*>(record.data()), kCifarRecord)) {
    labels[static_cast<std::size_t>(i)] = record[0];
    float* dst = images.data() + i * kCifarPixels;
    for (std::int64_t j = 0; j < kCifarPixels; ++j)
      dst[j] = static_cast<float>(record[static_cast<std::size_t>(j + 1)]) / 255.0f;
    ++i;
  }
  if (i - offset != 10000)
    throw std::runtime_error("CIFAR-10 file has wrong record count: " + path);
}

}  // namespace

bool cifar10_present(const std::string& root) {
  const fs::path dir = cifar_dir(root);
  if (!fs::exists(dir / "test_batch.bin")) return false;
  for (int i = 1; i <= 5; ++i)
    if (!fs::exists(dir / ("data_batch_" + std::to_string(i) + ".bin"))) return false;
  return true;
}

std::string cifar10_expected_layout(const std::string& root) {
  return cifar_dir(root) + "/{data_batch_1..5.bin,test_batch.bin} (3073-byte records: "
         "1 label byte + 3072 channel-major R/G/B pixel bytes)";
}

DatasetSplit load_cifar10(const std::string& root) {
  if (!cifar10_present(root))
    throw std::runtime_error("CIFAR-10 not found; expected " + cifar10_expected_layout(root));
  const fs::path dir = cifar_dir(root);

  DatasetSplit split;
  split.num_classes = 10;
  split.fraction = 1.0;
  split.train.images.data = Tensor({50000, 3, 32, 32});
  split.train.labels.resize(50000);
  for (int i = 1; i <= 5; ++i)
    read_cifar_file((dir / ("data_batch_" + std::to_string(i) + ".bin")).string(),
                    split.train.images.data, split.train.labels, (i - 1) * 10000);
  split.test.images.data = Tensor({10000, 3, 32, 32});
  split.test.labels.resize(10000);
  read_cifar_file((dir / "test_batch.bin").string(), split.test.images.data, split.test.labels, 0);
  return split;
}

namespace {

// Smooth random field: sum of a few low-frequency sinusoids.
struct Field {
  struct Wave {
    float fx, fy, phase, amp;
  };
  std::vector<Wave> waves;

  static Field sample(Rng& rng, int n_waves, float max_freq) {
    Field f;
    for (int i = 0; i < n_waves; ++i)
      f.waves.push_back({rng.uniform(0.5f, max_freq), rng.uniform(0.5f, max_freq),
                         rng.uniform(0.0f, 2.0f * static_cast<float>(std::numbers::pi)),
                         rng.uniform(0.3f, 1.0f)});
    return f;
  }

  float at(float x, float y) const {
    float v = 0.0f;
    for (const Wave& w : waves)
      v += w.amp * std::sin(w.fx * x + w.fy * y + w.phase);
    return v;
  }
};

void render_synthetic_sample(Tensor& images, std::int64_t index, const std::vector<Field>& proto,
                             const float* color_mean, Rng& rng) {
  const float dx = rng.uniform(-4.0f, 4.0f);
  const float dy = rng.uniform(-4.0f, 4.0f);
  const bool mirror = rng.bernoulli(0.5f);
  const float gain = rng.uniform(0.75f, 1.25f);
  const Field warp = Field::sample(rng, 2, 0.25f);
  const float noise_scale = 0.06f;

  for (int c = 0; c < 3; ++c) {
    for (int h = 0; h < 32; ++h) {
      for (int w = 0; w < 32; ++w) {
        const float ww = mirror ? 31.0f - static_cast<float>(w) : static_cast<float>(w);
        const float x = ww + dx + 2.0f * warp.at(static_cast<float>(w) * 0.2f, static_cast<float>(h) * 0.2f);
        const float y = static_cast<float>(h) + dy;
        float v = 0.5f + 0.22f * gain * proto[static_cast<std::size_t>(c)].at(x * 0.35f, y * 0.35f) +
                  0.18f * (color_mean[c] - 0.5f);
        v += noise_scale * (rng.next_float() - 0.5f);
        images.at4(index, c, h, w) = std::min(1.0f, std::max(0.0f, v));
      }
    }
  }
}

}  // namespace

DatasetSplit make_synthetic_split(std::int64_t train_count, std::int64_t test_count,
                                  std::uint64_t seed, double label_noise) {
  const int K = 10;
  DatasetSplit split;
  split.num_classes = K;
  split.fraction = 1.0;

  Rng class_rng = Rng(seed, 11).split(0);
  std::vector<std::vector<Field>> protos;
  std::vector<std::array<float, 3>> colors;
  for (int k = 0; k < K; ++k) {
    Rng r = class_rng.split(static_cast<std::uint64_t>(k));
    std::vector<Field> channels;
    for (int c = 0; c < 3; ++c) channels.push_back(Field::sample(r, 4, 1.6f));
    protos.push_back(std::move(channels));
    colors.push_back({r.next_float(), r.next_float(), r.next_float()});
  }

  auto fill = [&](LabeledBatch& batch, std::int64_t count, std::uint64_t stream, bool noisy) {
    batch.images.data = Tensor({count, 3, 32, 32});
    batch.labels.resize(static_cast<std::size_t>(count));
    Rng base(seed, stream);
    for (std::int64_t i = 0; i < count; ++i) {
      Rng r = base.split(static_cast<std::uint64_t>(i));
      const int k = static_cast<int>(i % K);
      render_synthetic_sample(batch.images.data, i, protos[static_cast<std::size_t>(k)],
                              colors[static_cast<std::size_t>(k)].data(), r);
      std::int32_t label = k;
      if (noisy && r.bernoulli(static_cast<float>(label_noise)))
        label = static_cast<std::int32_t>(r.next_below(K));
      batch.labels[static_cast<std::size_t>(i)] = label;
    }
  };

  fill(split.train, train_count, 21, true);
  fill(split.test, test_count, 22, false);
  return split;
}

DatasetSplit stratified_fraction(const DatasetSplit& split, double fraction, Rng rng) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("fraction must be in (0,1]");
  if (fraction == 1.0) return split;

  const std::int64_t n = split.train.count();
  std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(split.num_classes));
  for (std::int64_t i = 0; i < n; ++i)
    by_class[static_cast<std::size_t>(split.train.labels[static_cast<std::size_t>(i)])].push_back(i);

  std::vector<std::int64_t> keep;
  for (int k = 0; k < split.num_classes; ++k) {
    auto& idx = by_class[static_cast<std::size_t>(k)];
    if (idx.empty()) continue;
    // 1e-9 slack absorbs binary-representation dust in fraction * count.
    const std::int64_t m = static_cast<std::int64_t>(
        std::floor(fraction * static_cast<double>(idx.size()) + 1e-9));
    if (m < 1)
      throw std::invalid_argument("fraction " + std::to_string(fraction) +
                                  " empties class " + std::to_string(k));
    Rng class_rng = rng.split(static_cast<std::uint64_t>(k));
    for (std::size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[class_rng.next_below(i)]);
    keep.insert(keep.end(), idx.begin(), idx.begin() + m);
  }
  std::sort(keep.begin(), keep.end());

  DatasetSplit out;
  out.num_classes = split.num_classes;
  out.fraction = split.fraction * fraction;
  out.test = split.test;
  out.train = gather_batch(split.train, keep, 0, static_cast<std::int64_t>(keep.size()));
  return out;
}

std::vector<std::int64_t> epoch_order(std::int64_t count, Rng rng) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.next_below(i)]);
  return order;
}

LabeledBatch gather_batch(const LabeledBatch& all, const std::vector<std::int64_t>& order,
                          std::int64_t begin, std::int64_t count) {
  const std::int64_t avail = static_cast<std::int64_t>(order.size()) - begin;
  count = std::min(count, avail);
  if (count < 1) throw std::invalid_argument("gather_batch: empty batch");
  const std::int64_t sample = all.images.data.numel() / all.images.count();

  LabeledBatch out;
  out.images.data = Tensor({count, all.images.channels(), all.images.height(), all.images.width()});
  out.labels.resize(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t src = order[static_cast<std::size_t>(begin + i)];
    std::copy_n(all.images.data.data() + src * sample, sample, out.images.data.data() + i * sample);
    out.labels[static_cast<std::size_t>(i)] = all.labels[static_cast<std::size_t>(src)];
  }
  return out;
}

LabeledBatch slice_batch(const LabeledBatch& all, std::int64_t begin, std::int64_t count) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(all.count()));
  for (std::int64_t i = 0; i < all.count(); ++i) order[static_cast<std::size_t>(i)] = i;
  return gather_batch(all, order, begin, count);
}

const std::vector<std::string>& corruption_type_names() {
  static const std::vector<std::string> names = {
      "brightness",   "contrast",         "defocus_blur", "elastic_transform", "fog",
      "frost",        "gaussian_blur",    "gaussian_noise", "glass_blur",      "impulse_noise",
      "jpeg_compression", "motion_blur",  "pixelate",     "saturate",          "shot_noise",
      "snow",         "spatter",          "speckle_noise", "zoom_blur"};
  return names;
}

std::vector<std::string> corruption_types_present(const std::string& dir) {
  std::vector<std::string> present;
  for (const std::string& name : corruption_type_names())
    if (fs::exists(fs::path(dir) / (name + ".npy"))) present.push_back(name);
  return present;
}

CorruptionFile load_corruption(const std::string& dir, const std::string& name) {
  CorruptionFile cf;
  cf.name = name;
  cf.images = npy_load((fs::path(dir) / (name + ".npy")).string());
  cf.labels = npy_load((fs::path(dir) / "labels.npy").string());
  if (!cf.images.is_u8 || cf.images.shape.size() != 4 || cf.images.shape[3] != 3)
    throw std::runtime_error("corruption file must be uint8 [N,H,W,3]: " + name);
  if (cf.images.shape[0] % cf.severities != 0)
    throw std::runtime_error("corruption sample count not divisible by severities: " + name);
  cf.per_severity = cf.images.shape[0] / cf.severities;
  const std::int64_t nlab = cf.labels.numel();
  if (nlab != cf.per_severity && nlab != cf.images.shape[0])
    throw std::runtime_error("labels.npy length mismatch for " + name);
  return cf;
}

LabeledBatch CorruptionFile::batch(int severity, std::int64_t begin, std::int64_t count) const {
  if (severity < 1 || severity > severities) throw std::invalid_argument("severity must be 1..5");
  const std::int64_t block = (severity - 1) * per_severity;
  count = std::min(count, per_severity - begin);
  if (count < 1) throw std::invalid_argument("corruption batch empty");

  const std::int64_t H = images.shape[1], W = images.shape[2];
  LabeledBatch out;
  out.images.data = Tensor({count, 3, H, W});
  out.labels.resize(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const std::int64_t src = block + begin + i;
    const std::uint8_t* px = images.u8.data() + src * H * W * 3;
    for (std::int64_t h = 0; h < H; ++h)
      for (std::int64_t w = 0; w < W; ++w)
        for (std::int64_t c = 0; c < 3; ++c)
          out.images.data.at4(i, c, h, w) =
              static_cast<float>(px[(h * W + w) * 3 + c]) / 255.0f;
    const std::int64_t li = labels.numel() == per_severity ? begin + i : src;
    out.labels[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(labels.i64[static_cast<std::size_t>(li)]);
  }
  return out;
}

std::string resolve_data_root(const std::string& configured) {
  if (const char* env = std::getenv("CONSISTENCY_AT_DATA"); env && *env) return env;
  return configured;
}

}  // namespace conrad
