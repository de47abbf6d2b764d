#pragma once

#include <vector>

#include "conrad/model.hpp"
#include "conrad/tensor.hpp"

namespace conrad {

/// SGD with momentum and decoupled-into-gradient weight decay:
///   d   = g + weight_decay * theta
///   buf = momentum * buf + d      (buf = d on the first step)
///   theta -= lr * buf
struct Sgd {
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  std::vector<Tensor> buffers;  // one per parameter, empty until first step

  void step(std::vector<Classifier::ParamRef>& params, const std::vector<Tensor>& grads, float lr);
};

}  // namespace conrad
