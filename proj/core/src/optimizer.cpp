#include "conrad/optimizer.hpp"

#include <stdexcept>

namespace conrad {

void Sgd::step(std::vector<Classifier::ParamRef>& params, const std::vector<Tensor>& grads,
               float lr) {
  if (params.size() != grads.size()) throw std::invalid_argument("sgd: gradient count mismatch");
  if (buffers.empty()) buffers.resize(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = *params[i].tensor;
    const Tensor& g = grads[i];
    if (!theta.same_shape(g)) throw std::invalid_argument("sgd: gradient shape mismatch");
    Tensor& buf = buffers[i];
    const bool first = buf.empty();
    if (first) buf = Tensor(theta.shape());
    float* b = buf.data();
    float* p = theta.data();
    const float* gd = g.data();
    const std::int64_t n = theta.numel();
    for (std::int64_t k = 0; k < n; ++k) {
      const float d = gd[k] + weight_decay * p[k];
      b[k] = first ? d : momentum * b[k] + d;
      p[k] -= lr * b[k];
    }
  }
}

}  // namespace conrad
