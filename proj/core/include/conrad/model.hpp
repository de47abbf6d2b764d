#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "conrad/graph.hpp"
#include "conrad/rng.hpp"
#include "conrad/tensor.hpp"
#include "conrad/types.hpp"

namespace conrad {

enum class Arch { TinyCnn, PreactResNet18 };

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& name);

/// Classifier producing logits [N,K] from images [N,C,H,W].
///
/// tiny_cnn: two conv3x3(16)-norm-relu stages with stride 2 (32x32 -> 8x8),
/// global average pool, linear head. Small enough for finite-difference
/// oracles and smoke training.
///
/// preact_resnet18: stem conv, four stages of two pre-activation residual
/// blocks (64/128/256/512, stride 2 between stages), final norm+relu, global
/// average pool, linear head.
class Classifier {
 public:
  struct ConvLayer {
    std::string name;
    Tensor w;  // [Cout, Cin*k*k]
    int k = 3, stride = 1, pad = 1;
  };
  struct BnLayer {
    std::string name;
    Tensor gamma, beta;
    BnState state;
    float momentum = 0.1f, eps = 1e-5f;
  };
  struct LinearLayer {
    std::string name;
    Tensor w, b;  // [K,F], [K]
  };
  struct Block {
    int bn1, conv1, bn2, conv2;
    int shortcut;  // conv index, -1 when the identity shortcut applies
  };

  static Classifier make(Arch arch, int num_classes, std::array<int, 3> input_shape, Rng init);

  Arch arch() const { return arch_; }
  int num_classes() const { return num_classes_; }
  const std::array<int, 3>& input_shape() const { return input_shape_; }

  /// Named references to every trainable tensor, in a fixed order.
  struct ParamRef {
    std::string name;
    Tensor* tensor;
  };
  std::vector<ParamRef> parameters();
  /// Normalization statistics (not trained, but checkpointed).
  std::vector<ParamRef> buffers();
  std::int64_t parameter_count() const;

  /// Eager forward pass (builds a throwaway tape).
  Tensor forward(const Tensor& x, BnMode mode);

  /// One CaptureFrozen pass: records batch statistics into the frozen slots
  /// used by training-time attack iterations.
  void capture_frozen_stats(const Tensor& x);

  void check_input(const Tensor& x) const;

  std::vector<ConvLayer> convs;
  std::vector<BnLayer> bns;
  LinearLayer head;
  std::vector<Block> blocks;  // preact blocks; empty for tiny_cnn
  int final_bn = -1;

 private:
  Arch arch_ = Arch::TinyCnn;
  int num_classes_ = 10;
  std::array<int, 3> input_shape_{3, 32, 32};
};

/// Binds a classifier's parameters onto one tape so that several forward
/// passes (clean branch, adversarial branches) accumulate into the same
/// parameter gradients.
class BoundModel {
 public:
  BoundModel(Tape& tape, Classifier& model, bool params_require_grad);

  /// Logits node for a batch node; callable repeatedly on the same tape.
  Tape::Id forward(Tape::Id x, BnMode mode);

  /// Gradient of parameter i (order of Classifier::parameters()) after
  /// Tape::backward.
  Tensor param_gradient(std::size_t i) const;
  std::size_t param_count() const { return param_ids_.size(); }

 private:
  Tape* tape_;
  Classifier* model_;
  std::vector<Tape::Id> param_ids_;
  std::vector<Tape::Id> conv_w_;
  std::vector<std::array<Tape::Id, 2>> bn_gb_;
  Tape::Id head_w_, head_b_;
};

/// Gradient of the scalar batch loss (mean over samples) with respect to the
/// input pixels. reference_probs is required for KlToReference and must hold
/// the reference distribution [N,K].
Tensor input_gradient(Classifier& model, const Tensor& x, const std::vector<std::int32_t>& labels,
                      LossKind loss_kind, const Tensor* reference_probs, BnMode bn_mode);

}  // namespace conrad
