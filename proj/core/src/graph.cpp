#include "conrad/graph.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace conrad {

namespace {

using MatRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapM = Eigen::Map<MatRM>;
using MapC = Eigen::Map<const MatRM>;

constexpr float kProbFloor = 1e-12f;

std::int64_t conv_out_dim(std::int64_t in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// Per-sample patch matrix [Cin*k*k, Ho*Wo] with zero padding. Working one
// sample at a time keeps every GEMM shape independent of the batch size, so
// eval outputs are bit-identical however samples are batched.
void im2col_sample(const float* x, std::int64_t C, std::int64_t H, std::int64_t W, int k,
                   int stride, int pad, float* cols) {
  const std::int64_t Ho = conv_out_dim(H, k, stride, pad);
  const std::int64_t Wo = conv_out_dim(W, k, stride, pad);
  const std::int64_t P = Ho * Wo;
  std::fill_n(cols, C * k * k * P, 0.0f);
  for (std::int64_t c = 0; c < C; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const std::int64_t row = (c * k + ki) * k + kj;
        float* dst = cols + row * P;
        const float* src = x + c * H * W;
        for (std::int64_t i = 0; i < Ho; ++i) {
          const std::int64_t hi = i * stride + ki - pad;
          if (hi < 0 || hi >= H) continue;
          for (std::int64_t j = 0; j < Wo; ++j) {
            const std::int64_t wj = j * stride + kj - pad;
            if (wj < 0 || wj >= W) continue;
            dst[i * Wo + j] = src[hi * W + wj];
          }
        }
      }
    }
  }
}

void col2im_sample(const float* dcols, std::int64_t C, std::int64_t H, std::int64_t W, int k,
                   int stride, int pad, float* dx) {
  const std::int64_t Ho = conv_out_dim(H, k, stride, pad);
  const std::int64_t Wo = conv_out_dim(W, k, stride, pad);
  const std::int64_t P = Ho * Wo;
  for (std::int64_t c = 0; c < C; ++c) {
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const std::int64_t row = (c * k + ki) * k + kj;
        const float* src = dcols + row * P;
        float* dst = dx + c * H * W;
        for (std::int64_t i = 0; i < Ho; ++i) {
          const std::int64_t hi = i * stride + ki - pad;
          if (hi < 0 || hi >= H) continue;
          for (std::int64_t j = 0; j < Wo; ++j) {
            const std::int64_t wj = j * stride + kj - pad;
            if (wj < 0 || wj >= W) continue;
            dst[hi * W + wj] += src[i * Wo + j];
          }
        }
      }
    }
  }
}

}  // namespace

BnState::BnState(std::int64_t channels)
    : running_mean({channels}),
      running_var(Tensor::full({channels}, 1.0f)),
      frozen_mean({channels}),
      frozen_var(Tensor::full({channels}, 1.0f)) {}

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Tape::Id Tape::conv2d(Id x, Id w, int k, int stride, int pad) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  if (xv.rank() != 4) throw std::invalid_argument("conv2d: input must be rank 4");
  if (wv.rank() != 2 || wv.size(1) != xv.size(1) * k * k)
    throw std::invalid_argument("conv2d: weight shape mismatch");
  const std::int64_t N = xv.size(0), C = xv.size(1), H = xv.size(2), W = xv.size(3);
  const std::int64_t Cout = wv.size(0), Kdim = wv.size(1);
  const std::int64_t Ho = conv_out_dim(H, k, stride, pad);
  const std::int64_t Wo = conv_out_dim(W, k, stride, pad);
  if (Ho < 1 || Wo < 1) throw std::invalid_argument("conv2d: empty output");
  const std::int64_t P = Ho * Wo;

  Node n;
  n.op = Op::Conv2d;
  n.in = {x, w};
  n.i0 = k * 1000 + stride * 10 + pad;  // packed (k, stride, pad)
  n.value = Tensor({N, Cout, Ho, Wo});
#pragma omp parallel
  {
    std::vector<float> cols(static_cast<std::size_t>(Kdim * P));
    MapC Wm(wv.data(), Cout, Kdim);
#pragma omp for schedule(static)
    for (std::int64_t nn = 0; nn < N; ++nn) {
      im2col_sample(xv.data() + nn * C * H * W, C, H, W, k, stride, pad, cols.data());
      MapC Cols(cols.data(), Kdim, P);
      MapM Y(n.value.data() + nn * Cout * P, Cout, P);
      Y.noalias() = Wm * Cols;
    }
  }
  n.requires_grad = requires_grad(x) || requires_grad(w);
  return push(std::move(n));
}

Tape::Id Tape::batchnorm(Id x, Id gamma, Id beta, BnState* state, BnMode mode, float momentum,
                         float eps) {
  const Tensor& xv = value(x);
  if (xv.rank() != 4) throw std::invalid_argument("batchnorm: input must be rank 4");
  const std::int64_t N = xv.size(0), C = xv.size(1), HW = xv.size(2) * xv.size(3);
  const std::int64_t m = N * HW;

  Tensor mean({C}), var({C});
  if (mode == BnMode::Train || mode == BnMode::CaptureFrozen) {
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::int64_t n = 0; n < N; ++n) {
        const float* p = xv.data() + (n * C + c) * HW;
        for (std::int64_t i = 0; i < HW; ++i) s += p[i];
      }
      const double mu = s / static_cast<double>(m);
      double v = 0.0;
      for (std::int64_t n = 0; n < N; ++n) {
        const float* p = xv.data() + (n * C + c) * HW;
        for (std::int64_t i = 0; i < HW; ++i) {
          const double d = p[i] - mu;
          v += d * d;
        }
      }
      mean[c] = static_cast<float>(mu);
      var[c] = static_cast<float>(v / static_cast<double>(m));
    }
    if (mode == BnMode::Train) {
      for (std::int64_t c = 0; c < C; ++c) {
        state->running_mean[c] = (1.0f - momentum) * state->running_mean[c] + momentum * mean[c];
        state->running_var[c] = (1.0f - momentum) * state->running_var[c] + momentum * var[c];
      }
    } else {
      state->frozen_mean = mean;
      state->frozen_var = var;
    }
  } else if (mode == BnMode::Eval) {
    mean = state->running_mean;
    var = state->running_var;
  } else {
    mean = state->frozen_mean;
    var = state->frozen_var;
  }

  Tensor invstd({C});
  for (std::int64_t c = 0; c < C; ++c)
    invstd[c] = 1.0f / std::sqrt(var[c] + eps);

  const Tensor& g = value(gamma);
  const Tensor& b = value(beta);
  Node n;
  n.op = Op::BatchNorm;
  n.in = {x, gamma, beta};
  n.bn = state;
  n.bn_mode = mode;
  n.f0 = momentum;
  n.f1 = eps;
  n.value = Tensor(xv.shape());
#pragma omp parallel for schedule(static)
  for (std::int64_t nn = 0; nn < N; ++nn)
    for (std::int64_t c = 0; c < C; ++c) {
      const float* src = xv.data() + (nn * C + c) * HW;
      float* dst = n.value.data() + (nn * C + c) * HW;
      const float mu = mean[c], is = invstd[c], gc = g[c], bc = b[c];
      for (std::int64_t i = 0; i < HW; ++i) dst[i] = gc * (src[i] - mu) * is + bc;
    }
  n.aux = std::move(mean);
  n.aux2 = std::move(invstd);
  n.requires_grad = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
  return push(std::move(n));
}

Tape::Id Tape::relu(Id x) {
  Node n;
  n.op = Op::Relu;
  n.in = {x};
  n.value = value(x);
  for (std::int64_t i = 0; i < n.value.numel(); ++i)
    if (n.value[i] < 0.0f) n.value[i] = 0.0f;
  n.requires_grad = requires_grad(x);
  return push(std::move(n));
}

Tape::Id Tape::add(Id a, Id b) {
  if (!value(a).same_shape(value(b))) throw std::invalid_argument("add: shape mismatch");
  Node n;
  n.op = Op::Add;
  n.in = {a, b};
  n.value = value(a);
  n.value.add_scaled(value(b), 1.0f);
  n.requires_grad = requires_grad(a) || requires_grad(b);
  return push(std::move(n));
}

Tape::Id Tape::linear(Id x, Id w, Id b) {
  const Tensor& xv = value(x);
  const Tensor& wv = value(w);
  const Tensor& bv = value(b);
  if (xv.rank() != 2 || wv.rank() != 2 || xv.size(1) != wv.size(1))
    throw std::invalid_argument("linear: shape mismatch");
  const std::int64_t N = xv.size(0), K = wv.size(0), F = wv.size(1);
  Node n;
  n.op = Op::Linear;
  n.in = {x, w, b};
  n.value = Tensor({N, K});
  // per-sample products: output bits independent of batch composition
  MapC W(wv.data(), K, F);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < N; ++i) {
    Eigen::Map<const Eigen::VectorXf> xi(xv.data() + i * F, F);
    Eigen::Map<Eigen::VectorXf> yi(n.value.data() + i * K, K);
    yi.noalias() = W * xi;
    for (std::int64_t j = 0; j < K; ++j) yi[j] += bv[j];
  }
  n.requires_grad = requires_grad(x) || requires_grad(w) || requires_grad(b);
  return push(std::move(n));
}

Tape::Id Tape::global_avg_pool(Id x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 4) throw std::invalid_argument("global_avg_pool: input must be rank 4");
  const std::int64_t N = xv.size(0), C = xv.size(1), HW = xv.size(2) * xv.size(3);
  Node n;
  n.op = Op::GlobalAvgPool;
  n.in = {x};
  n.value = Tensor({N, C});
  for (std::int64_t nn = 0; nn < N; ++nn)
    for (std::int64_t c = 0; c < C; ++c) {
      const float* p = xv.data() + (nn * C + c) * HW;
      double s = 0.0;
      for (std::int64_t i = 0; i < HW; ++i) s += p[i];
      n.value.at2(nn, c) = static_cast<float>(s / static_cast<double>(HW));
    }
  n.requires_grad = requires_grad(x);
  return push(std::move(n));
}

Tape::Id Tape::softmax_rows(Id z, float tau) {
  if (tau <= 0.0f) throw std::invalid_argument("softmax temperature must be > 0");
  const Tensor& zv = value(z);
  if (zv.rank() != 2) throw std::invalid_argument("softmax_rows: input must be rank 2");
  const std::int64_t N = zv.size(0), K = zv.size(1);
  Node n;
  n.op = Op::SoftmaxRows;
  n.in = {z};
  n.f0 = tau;
  n.value = Tensor({N, K});
  for (std::int64_t i = 0; i < N; ++i) {
    float mx = -std::numeric_limits<float>::infinity();
    for (std::int64_t k = 0; k < K; ++k) mx = std::max(mx, zv.at2(i, k) / tau);
    double denom = 0.0;
    for (std::int64_t k = 0; k < K; ++k) {
      const float e = std::exp(zv.at2(i, k) / tau - mx);
      n.value.at2(i, k) = e;
      denom += e;
    }
    for (std::int64_t k = 0; k < K; ++k)
      n.value.at2(i, k) = static_cast<float>(n.value.at2(i, k) / denom);
  }
  n.requires_grad = requires_grad(z);
  return push(std::move(n));
}

Tape::Id Tape::log_floored(Id x) {
  Node n;
  n.op = Op::LogFloored;
  n.in = {x};
  n.value = value(x);
  for (std::int64_t i = 0; i < n.value.numel(); ++i)
    n.value[i] = std::log(std::max(n.value[i], kProbFloor));
  n.requires_grad = requires_grad(x);
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  if (!value(a).same_shape(value(b))) throw std::invalid_argument("sub: shape mismatch");
  Node n;
  n.op = Op::Sub;
  n.in = {a, b};
  n.value = value(a);
  n.value.add_scaled(value(b), -1.0f);
  n.requires_grad = requires_grad(a) || requires_grad(b);
  return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
  if (!value(a).same_shape(value(b))) throw std::invalid_argument("mul: shape mismatch");
  Node n;
  n.op = Op::Mul;
  n.in = {a, b};
  n.value = value(a);
  const Tensor& bv = value(b);
  for (std::int64_t i = 0; i < n.value.numel(); ++i) n.value[i] *= bv[i];
  n.requires_grad = requires_grad(a) || requires_grad(b);
  return push(std::move(n));
}

Tape::Id Tape::affine(Id x, float mul_by, float add_to) {
  Node n;
  n.op = Op::Affine;
  n.in = {x};
  n.f0 = mul_by;
  n.f1 = add_to;
  n.value = value(x);
  for (std::int64_t i = 0; i < n.value.numel(); ++i) n.value[i] = mul_by * n.value[i] + add_to;
  n.requires_grad = requires_grad(x);
  return push(std::move(n));
}

Tape::Id Tape::sum_rows(Id x) {
  const Tensor& xv = value(x);
  if (xv.rank() != 2) throw std::invalid_argument("sum_rows: input must be rank 2");
  const std::int64_t N = xv.size(0), K = xv.size(1);
  Node n;
  n.op = Op::SumRows;
  n.in = {x};
  n.value = Tensor({N});
  for (std::int64_t i = 0; i < N; ++i) {
    double s = 0.0;
    for (std::int64_t k = 0; k < K; ++k) s += xv.at2(i, k);
    n.value[i] = static_cast<float>(s);
  }
  n.requires_grad = requires_grad(x);
  return push(std::move(n));
}

Tape::Id Tape::mean_all(Id x) {
  Node n;
  n.op = Op::MeanAll;
  n.in = {x};
  n.value = Tensor({1});
  n.value[0] = static_cast<float>(value(x).sum() / static_cast<double>(value(x).numel()));
  n.requires_grad = requires_grad(x);
  return push(std::move(n));
}

Tape::Id Tape::sum_all(Id x) {
  Node n;
  n.op = Op::SumAll;
  n.in = {x};
  n.value = Tensor({1});
  n.value[0] = static_cast<float>(value(x).sum());
  n.requires_grad = requires_grad(x);
  return push(std::move(n));
}

Tape::Id Tape::gather_label(Id p, std::vector<std::int32_t> labels) {
  const Tensor& pv = value(p);
  if (pv.rank() != 2 || pv.size(0) != static_cast<std::int64_t>(labels.size()))
    throw std::invalid_argument("gather_label: shape mismatch");
  Node n;
  n.op = Op::GatherLabel;
  n.in = {p};
  n.value = Tensor({pv.size(0)});
  for (std::int64_t i = 0; i < pv.size(0); ++i)
    n.value[i] = pv.at2(i, labels[static_cast<std::size_t>(i)]);
  n.labels = std::move(labels);
  n.requires_grad = requires_grad(p);
  return push(std::move(n));
}

Tape::Id Tape::max_except_label(Id z, std::vector<std::int32_t> labels) {
  const Tensor& zv = value(z);
  if (zv.rank() != 2 || zv.size(0) != static_cast<std::int64_t>(labels.size()))
    throw std::invalid_argument("max_except_label: shape mismatch");
  if (zv.size(1) < 2)
    throw std::invalid_argument("max_except_label: needs at least two classes");
  Node n;
  n.op = Op::MaxExceptLabel;
  n.in = {z};
  n.value = Tensor({zv.size(0)});
  n.aux = Tensor({zv.size(0)});  // argmax index per row
  for (std::int64_t i = 0; i < zv.size(0); ++i) {
    const std::int32_t y = labels[static_cast<std::size_t>(i)];
    float best = -std::numeric_limits<float>::infinity();
    std::int64_t arg = -1;
    for (std::int64_t k = 0; k < zv.size(1); ++k) {
      if (k == y) continue;
      if (zv.at2(i, k) > best) {
        best = zv.at2(i, k);
        arg = k;
      }
    }
    n.value[i] = best;
    n.aux[i] = static_cast<float>(arg);
  }
  n.labels = std::move(labels);
  n.requires_grad = requires_grad(z);
  return push(std::move(n));
}

Tape::Id Tape::weighted_sum(std::vector<Id> xs, std::vector<float> coeffs) {
  if (xs.empty() || xs.size() != coeffs.size())
    throw std::invalid_argument("weighted_sum: arity mismatch");
  Node n;
  n.op = Op::WeightedSum;
  n.value = Tensor({1});
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (value(xs[i]).numel() != 1) throw std::invalid_argument("weighted_sum: inputs must be scalar");
    s += static_cast<double>(coeffs[i]) * value(xs[i])[0];
    n.requires_grad = n.requires_grad || requires_grad(xs[i]);
  }
  n.value[0] = static_cast<float>(s);
  n.in = std::move(xs);
  n.coeffs = std::move(coeffs);
  return push(std::move(n));
}

Tensor Tape::gradient(Id id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.has_grad) return n.grad;
  return Tensor(n.value.shape());
}

Tensor& Tape::grad_buffer(Id id) {
  Node& n = at(id);
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::accumulate(Id id, const Tensor& g) {
  grad_buffer(id).add_scaled(g, 1.0f);
}

void Tape::backward(Id root) {
  if (backward_done_) throw std::logic_error("tape backward may run only once");
  backward_done_ = true;
  if (value(root).numel() != 1) throw std::invalid_argument("backward root must be scalar");
  if (!at(root).requires_grad) return;
  grad_buffer(root)[0] = 1.0f;
  for (Id id = root; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad || n.op == Op::Leaf || !n.requires_grad) continue;
    backward_node(id);
  }
}

void Tape::backward_node(Id id) {
  Node& n = at(id);
  const Tensor& dy = n.grad;

  auto needs = [&](std::size_t i) { return requires_grad(n.in[i]); };

  switch (n.op) {
    case Op::Leaf:
      break;

    case Op::Conv2d: {
      const int k = n.i0 / 1000, stride = (n.i0 / 10) % 100, pad = n.i0 % 10;
      const Tensor& xv = value(n.in[0]);
      const Tensor& wv = value(n.in[1]);
      const std::int64_t N = xv.size(0), C = xv.size(1), H = xv.size(2), W = xv.size(3);
      const std::int64_t Cout = wv.size(0), Kdim = wv.size(1);
      const std::int64_t P = n.value.size(2) * n.value.size(3);

      if (needs(0)) {
        Tensor dx(xv.shape());
#pragma omp parallel
        {
          std::vector<float> dcols(static_cast<std::size_t>(Kdim * P));
          MapC Wm(wv.data(), Cout, Kdim);
#pragma omp for schedule(static)
          for (std::int64_t nn = 0; nn < N; ++nn) {
            MapC Dy(dy.data() + nn * Cout * P, Cout, P);
            MapM Dcols(dcols.data(), Kdim, P);
            Dcols.noalias() = Wm.transpose() * Dy;
            col2im_sample(dcols.data(), C, H, W, k, stride, pad, dx.data() + nn * C * H * W);
          }
        }
        accumulate(n.in[0], dx);
      }
      if (needs(1)) {
        // Serial per-sample accumulation keeps parameter gradients
        // independent of the thread count.
        Tensor dw({Cout, Kdim});
        std::vector<float> cols(static_cast<std::size_t>(Kdim * P));
        MapM Dw(dw.data(), Cout, Kdim);
        for (std::int64_t nn = 0; nn < N; ++nn) {
          im2col_sample(xv.data() + nn * C * H * W, C, H, W, k, stride, pad, cols.data());
          MapC Dy(dy.data() + nn * Cout * P, Cout, P);
          MapC Cols(cols.data(), Kdim, P);
          Dw.noalias() += Dy * Cols.transpose();
        }
        accumulate(n.in[1], dw);
      }
      break;
    }

    case Op::BatchNorm: {
      const Tensor& xv = value(n.in[0]);
      const Tensor& g = value(n.in[1]);
      const std::int64_t N = xv.size(0), C = xv.size(1), HW = xv.size(2) * xv.size(3);
      const std::int64_t m = N * HW;
      const Tensor& mean = n.aux;
      const Tensor& invstd = n.aux2;
      const bool batch_stats = n.bn_mode == BnMode::Train || n.bn_mode == BnMode::CaptureFrozen;

      Tensor dgamma({C}), dbeta({C});
      Tensor dx;
      const bool want_dx = needs(0);
      if (want_dx) dx = Tensor(xv.shape());

#pragma omp parallel for schedule(static)
      for (std::int64_t c = 0; c < C; ++c) {
        double s1 = 0.0, s2 = 0.0;
        for (std::int64_t nn = 0; nn < N; ++nn) {
          const float* xp = xv.data() + (nn * C + c) * HW;
          const float* dp = dy.data() + (nn * C + c) * HW;
          for (std::int64_t i = 0; i < HW; ++i) {
            const float xhat = (xp[i] - mean[c]) * invstd[c];
            s1 += dp[i];
            s2 += dp[i] * xhat;
          }
        }
        dbeta[c] = static_cast<float>(s1);
        dgamma[c] = static_cast<float>(s2);
        if (want_dx) {
          const float gc = g[c] * invstd[c];
          if (batch_stats) {
            const float inv_m = 1.0f / static_cast<float>(m);
            for (std::int64_t nn = 0; nn < N; ++nn) {
              const float* xp = xv.data() + (nn * C + c) * HW;
              const float* dp = dy.data() + (nn * C + c) * HW;
              float* out = dx.data() + (nn * C + c) * HW;
              for (std::int64_t i = 0; i < HW; ++i) {
                const float xhat = (xp[i] - mean[c]) * invstd[c];
                out[i] = gc * (dp[i] - inv_m * static_cast<float>(s1) -
                               xhat * inv_m * static_cast<float>(s2));
              }
            }
          } else {
            for (std::int64_t nn = 0; nn < N; ++nn) {
              const float* dp = dy.data() + (nn * C + c) * HW;
              float* out = dx.data() + (nn * C + c) * HW;
              for (std::int64_t i = 0; i < HW; ++i) out[i] = gc * dp[i];
            }
          }
        }
      }
      if (want_dx) accumulate(n.in[0], dx);
      if (needs(1)) accumulate(n.in[1], dgamma);
      if (needs(2)) accumulate(n.in[2], dbeta);
      break;
    }

    case Op::Relu: {
      if (!needs(0)) break;
      const Tensor& xv = value(n.in[0]);
      Tensor dx(xv.shape());
      for (std::int64_t i = 0; i < xv.numel(); ++i) dx[i] = xv[i] > 0.0f ? dy[i] : 0.0f;
      accumulate(n.in[0], dx);
      break;
    }

    case Op::Add:
      if (needs(0)) accumulate(n.in[0], dy);
      if (needs(1)) accumulate(n.in[1], dy);
      break;

    case Op::Linear: {
      const Tensor& xv = value(n.in[0]);
      const Tensor& wv = value(n.in[1]);
      const std::int64_t N = xv.size(0), F = xv.size(1), K = wv.size(0);
      if (needs(0)) {
        Tensor dx({N, F});
        MapC W(wv.data(), K, F);
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < N; ++i) {
          Eigen::Map<const Eigen::VectorXf> dyi(dy.data() + i * K, K);
          Eigen::Map<Eigen::VectorXf> dxi(dx.data() + i * F, F);
          dxi.noalias() = W.transpose() * dyi;
        }
        accumulate(n.in[0], dx);
      }
      if (needs(1)) {
        Tensor dw({K, F});
        MapM Dw(dw.data(), K, F);
        for (std::int64_t i = 0; i < N; ++i) {
          Eigen::Map<const Eigen::VectorXf> dyi(dy.data() + i * K, K);
          Eigen::Map<const Eigen::VectorXf> xi(xv.data() + i * F, F);
          Dw.noalias() += dyi * xi.transpose();
        }
        accumulate(n.in[1], dw);
      }
      if (needs(2)) {
        Tensor db({K});
        for (std::int64_t i = 0; i < N; ++i)
          for (std::int64_t j = 0; j < K; ++j) db[j] += dy.at2(i, j);
        accumulate(n.in[2], db);
      }
      break;
    }

    case Op::GlobalAvgPool: {
      if (!needs(0)) break;
      const Tensor& xv = value(n.in[0]);
      const std::int64_t N = xv.size(0), C = xv.size(1), HW = xv.size(2) * xv.size(3);
      Tensor dx(xv.shape());
      const float inv = 1.0f / static_cast<float>(HW);
      for (std::int64_t nn = 0; nn < N; ++nn)
        for (std::int64_t c = 0; c < C; ++c) {
          float* out = dx.data() + (nn * C + c) * HW;
          const float v = dy.at2(nn, c) * inv;
          for (std::int64_t i = 0; i < HW; ++i) out[i] = v;
        }
      accumulate(n.in[0], dx);
      break;
    }

    case Op::SoftmaxRows: {
      if (!needs(0)) break;
      const Tensor& p = n.value;
      const std::int64_t N = p.size(0), K = p.size(1);
      Tensor dz({N, K});
      const float inv_tau = 1.0f / n.f0;
      for (std::int64_t i = 0; i < N; ++i) {
        double dot = 0.0;
        for (std::int64_t k = 0; k < K; ++k) dot += static_cast<double>(dy.at2(i, k)) * p.at2(i, k);
        for (std::int64_t k = 0; k < K; ++k)
          dz.at2(i, k) = inv_tau * p.at2(i, k) * (dy.at2(i, k) - static_cast<float>(dot));
      }
      accumulate(n.in[0], dz);
      break;
    }

    case Op::LogFloored: {
      if (!needs(0)) break;
      const Tensor& xv = value(n.in[0]);
      Tensor dx(xv.shape());
      for (std::int64_t i = 0; i < xv.numel(); ++i)
        dx[i] = xv[i] > kProbFloor ? dy[i] / xv[i] : 0.0f;
      accumulate(n.in[0], dx);
      break;
    }

    case Op::Sub: {
      if (needs(0)) accumulate(n.in[0], dy);
      if (needs(1)) {
        Tensor neg = dy;
        neg.scale(-1.0f);
        accumulate(n.in[1], neg);
      }
      break;
    }

    case Op::Mul: {
      if (needs(0)) {
        Tensor da = dy;
        const Tensor& bv = value(n.in[1]);
        for (std::int64_t i = 0; i < da.numel(); ++i) da[i] *= bv[i];
        accumulate(n.in[0], da);
      }
      if (needs(1)) {
        Tensor db = dy;
        const Tensor& av = value(n.in[0]);
        for (std::int64_t i = 0; i < db.numel(); ++i) db[i] *= av[i];
        accumulate(n.in[1], db);
      }
      break;
    }

    case Op::Affine: {
      if (!needs(0)) break;
      Tensor dx = dy;
      dx.scale(n.f0);
      accumulate(n.in[0], dx);
      break;
    }

    case Op::SumRows: {
      if (!needs(0)) break;
      const Tensor& xv = value(n.in[0]);
      Tensor dx(xv.shape());
      for (std::int64_t i = 0; i < xv.size(0); ++i)
        for (std::int64_t k = 0; k < xv.size(1); ++k) dx.at2(i, k) = dy[i];
      accumulate(n.in[0], dx);
      break;
    }

    case Op::MeanAll: {
      if (!needs(0)) break;
      const Tensor& xv = value(n.in[0]);
      Tensor dx(xv.shape());
      const float v = dy[0] / static_cast<float>(xv.numel());
      dx.fill(v);
      accumulate(n.in[0], dx);
      break;
    }

    case Op::SumAll: {
      if (!needs(0)) break;
      Tensor dx(value(n.in[0]).shape());
      dx.fill(dy[0]);
      accumulate(n.in[0], dx);
      break;
    }

    case Op::GatherLabel: {
      if (!needs(0)) break;
      const Tensor& pv = value(n.in[0]);
      Tensor dx(pv.shape());
      for (std::int64_t i = 0; i < pv.size(0); ++i)
        dx.at2(i, n.labels[static_cast<std::size_t>(i)]) = dy[i];
      accumulate(n.in[0], dx);
      break;
    }

    case Op::MaxExceptLabel: {
      if (!needs(0)) break;
      const Tensor& zv = value(n.in[0]);
      Tensor dx(zv.shape());
      for (std::int64_t i = 0; i < zv.size(0); ++i)
        dx.at2(i, static_cast<std::int64_t>(n.aux[i])) = dy[i];
      accumulate(n.in[0], dx);
      break;
    }

    case Op::WeightedSum: {
      for (std::size_t i = 0; i < n.in.size(); ++i) {
        if (!requires_grad(n.in[i])) continue;
        Tensor d({1});
        d[0] = dy[0] * n.coeffs[i];
        accumulate(n.in[i], d);
      }
      break;
    }
  }
}

}  // namespace conrad
