#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "conrad/model.hpp"
#include "conrad/tensor.hpp"

namespace conrad {

/// Metadata stored alongside parameter tensors. Round-trips through JSON.
struct CheckpointMeta {
  std::string config_hash;
  std::string arch = "tiny_cnn";
  int num_classes = 10;
  std::array<int, 3> input_shape{3, 32, 32};
  int epoch = 0;
  std::uint64_t seed = 0;
  double clean_acc = -1.0;
  double pgd10_acc = -1.0;
  double best_pgd10 = -1.0;
};

/// Single-archive checkpoint: JSON metadata plus raw float32 tensors keyed by
/// layer path. Bit-exact round trip by construction (raw bytes).
void save_checkpoint(const std::string& path, Classifier& model, const CheckpointMeta& meta,
                     const std::vector<Tensor>* momentum_buffers = nullptr);

struct LoadedCheckpoint {
  Classifier model;
  CheckpointMeta meta;
  std::vector<Tensor> momentum_buffers;  // empty when the archive carries none
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace conrad
