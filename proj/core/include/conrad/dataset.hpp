#pragma once

#include <optional>
#include <string>
#include <vector>

#include "conrad/npy.hpp"
#include "conrad/rng.hpp"
#include "conrad/types.hpp"

namespace conrad {

/// CIFAR-10 binary ingestion. Each record is 3073 bytes: one label byte then
/// 3072 pixel bytes (channel-major R/G/B, row-major within a channel).
/// Pixels map byte -> [0,1] via /255. Expects data_batch_{1..5}.bin and
/// test_batch.bin under `root` or `root`/cifar-10-batches-bin.
DatasetSplit load_cifar10(const std::string& root);

/// True when the CIFAR-10 binary files are present under `root`.
bool cifar10_present(const std::string& root);

/// Path the loader would read; used for error messages ("expected ...").
std::string cifar10_expected_layout(const std::string& root);

/// Deterministic synthetic 10-class corpus with CIFAR-10 geometry
/// (3x32x32). Classes are smooth textured prototypes; samples differ by
/// random shifts, mirror, color gain, a smooth distortion field and pixel
/// noise, and a fraction of training labels is resampled so that small
/// models can genuinely overfit. Useful for desk-scale experiments when no
/// real dataset is on disk.
DatasetSplit make_synthetic_split(std::int64_t train_count, std::int64_t test_count,
                                  std::uint64_t seed, double label_noise = 0.08);

/// Class-stratified, seed-deterministic subsampling of the train split.
/// Per-class counts are floor(fraction * class_count); an empty class is an
/// error. fraction == 1 returns the split unchanged.
DatasetSplit stratified_fraction(const DatasetSplit& split, double fraction, Rng rng);

/// Shuffled sample order for one epoch (Fisher-Yates, deterministic in rng).
std::vector<std::int64_t> epoch_order(std::int64_t count, Rng rng);

/// Gather a batch by index list.
LabeledBatch gather_batch(const LabeledBatch& all, const std::vector<std::int64_t>& order,
                          std::int64_t begin, std::int64_t count);

/// Slice [begin, begin+count) in natural order.
LabeledBatch slice_batch(const LabeledBatch& all, std::int64_t begin, std::int64_t count);

// ---- Corruption datasets (CIFAR-10-C layout) ----
//
// One NPY v1.0 file per corruption type: [5*10000, 32, 32, 3] uint8 HWC with
// severity blocks of 10000 in order 1..5, plus labels.npy of length 10000
// (repeated per severity) or 5*10000.

/// The 19 corruption types of CIFAR-10-C.
const std::vector<std::string>& corruption_type_names();

struct CorruptionFile {
  std::string name;
  NpyArray images;  // uint8 HWC
  NpyArray labels;  // int64
  int severities = 5;
  std::int64_t per_severity = 0;

  /// Convert a slice of one severity block (1-based severity) to a batch.
  LabeledBatch batch(int severity, std::int64_t begin, std::int64_t count) const;
};

/// Corruption types with a readable npy file under `dir`.
std::vector<std::string> corruption_types_present(const std::string& dir);
CorruptionFile load_corruption(const std::string& dir, const std::string& name);

/// Dataset root resolution: explicit config value unless the
/// CONSISTENCY_AT_DATA environment variable overrides it.
std::string resolve_data_root(const std::string& configured);

}  // namespace conrad
