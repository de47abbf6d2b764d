#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "conrad/tensor.hpp"

namespace conrad {

/// Batch-statistics handling for normalization layers.
///   Train         : batch stats, running stats updated (biased variance)
///   Eval          : running stats, nothing updated
///   Frozen        : previously captured stats, nothing updated
///   CaptureFrozen : batch stats, stored into the frozen slots, nothing else
/// Training-time attack loops run under Frozen (captured once from the clean
/// augmented batch), evaluation-time attacks under Eval.
enum class BnMode { Train, Eval, Frozen, CaptureFrozen };

/// Normalization statistics owned by the model, mutated only by forward
/// passes in Train (running) or CaptureFrozen (frozen) mode.
struct BnState {
  Tensor running_mean, running_var;
  Tensor frozen_mean, frozen_var;

  explicit BnState(std::int64_t channels = 0);
};

/// Reverse-mode tape over Tensor values. Nodes are appended in topological
/// order; backward(root) walks them once in reverse. A tape is single-use:
/// build, run backward at most once, read gradients, discard.
class Tape {
 public:
  using Id = std::int32_t;

  Id leaf(Tensor value, bool requires_grad);
  Id constant(Tensor value) { return leaf(std::move(value), false); }

  // ---- network layers ----
  /// x [N,Cin,H,W], w [Cout, Cin*k*k]; zero padding, square kernel/stride.
  Id conv2d(Id x, Id w, int k, int stride, int pad);
  Id batchnorm(Id x, Id gamma, Id beta, BnState* state, BnMode mode,
               float momentum = 0.1f, float eps = 1e-5f);
  Id relu(Id x);
  Id add(Id a, Id b);
  /// x [N,F], w [K,F], b [K] -> [N,K]
  Id linear(Id x, Id w, Id b);
  /// [N,C,H,W] -> [N,C]
  Id global_avg_pool(Id x);

  // ---- loss algebra ----
  /// rows of softmax(z / tau); tau > 0.
  Id softmax_rows(Id z, float tau);
  /// ln(max(x, 1e-12)) elementwise; the flooring keeps divergences finite.
  Id log_floored(Id x);
  Id sub(Id a, Id b);
  Id mul(Id a, Id b);
  Id affine(Id x, float mul_by, float add_to);
  /// [N,K] -> [N]
  Id sum_rows(Id x);
  /// any shape -> scalar [1]
  Id mean_all(Id x);
  Id sum_all(Id x);
  /// p [N,K] -> [N]: p[n, labels[n]]
  Id gather_label(Id p, std::vector<std::int32_t> labels);
  /// z [N,K] -> [N]: max over k != labels[n]; needs K >= 2.
  Id max_except_label(Id z, std::vector<std::int32_t> labels);
  /// scalar combination sum_i coeff_i * x_i of scalar nodes.
  Id weighted_sum(std::vector<Id> xs, std::vector<float> coeffs);

  const Tensor& value(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  /// Zero tensor when the node never received gradient.
  Tensor gradient(Id id) const;
  bool requires_grad(Id id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// Reverse pass from a scalar root; may be called once per tape.
  void backward(Id root);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    Leaf,
    Conv2d,
    BatchNorm,
    Relu,
    Add,
    Linear,
    GlobalAvgPool,
    SoftmaxRows,
    LogFloored,
    Sub,
    Mul,
    Affine,
    SumRows,
    MeanAll,
    SumAll,
    GatherLabel,
    MaxExceptLabel,
    WeightedSum,
  };

  struct Node {
    Op op = Op::Leaf;
    std::vector<Id> in;
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;

    int i0 = 0, i1 = 0;   // kernel/stride/pad
    float f0 = 0.0f;      // tau / scale / momentum
    float f1 = 0.0f;      // shift / eps
    BnState* bn = nullptr;
    BnMode bn_mode = BnMode::Eval;
    std::vector<std::int32_t> labels;
    std::vector<float> coeffs;
    Tensor aux;   // op-specific cache (bn mean / argmax indices / ...)
    Tensor aux2;  // op-specific cache (bn invstd / ...)
  };

  Id push(Node n);
  Node& at(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
  void accumulate(Id id, const Tensor& g);
  Tensor& grad_buffer(Id id);
  void backward_node(Id id);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace conrad
