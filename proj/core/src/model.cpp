#include "conrad/model.hpp"

#include <cmath>
#include <stdexcept>

#include "conrad/losses.hpp"

namespace conrad {

std::string arch_name(Arch a) {
  switch (a) {
    case Arch::TinyCnn: return "tiny_cnn";
    case Arch::PreactResNet18: return "preact_resnet18";
  }
  throw std::logic_error("unreachable arch");
}

Arch arch_from_name(const std::string& name) {
  if (name == "tiny_cnn") return Arch::TinyCnn;
  if (name == "preact_resnet18") return Arch::PreactResNet18;
  throw std::invalid_argument("unknown architecture: " + name);
}

namespace {

Tensor he_normal(std::int64_t out_ch, std::int64_t fan_in, Rng& rng) {
  Tensor w({out_ch, fan_in});
  const float std = std::sqrt(2.0f / static_cast<float>(fan_in));
  for (std::int64_t i = 0; i < w.numel(); ++i) w[i] = std * rng.normal();
  return w;
}

}  // namespace

Classifier Classifier::make(Arch arch, int num_classes, std::array<int, 3> input_shape, Rng init) {
  if (num_classes < 2) throw std::invalid_argument("classifier needs at least 2 classes");
  Classifier m;
  m.arch_ = arch;
  m.num_classes_ = num_classes;
  m.input_shape_ = input_shape;

  int stream = 0;
  auto conv = [&](const std::string& name, int cin, int cout, int k, int stride, int pad) {
    Rng r = init.split(static_cast<std::uint64_t>(stream++));
    ConvLayer c;
    c.name = name;
    c.k = k;
    c.stride = stride;
    c.pad = pad;
    c.w = he_normal(cout, static_cast<std::int64_t>(cin) * k * k, r);
    m.convs.push_back(std::move(c));
    return static_cast<int>(m.convs.size() - 1);
  };
  auto bn = [&](const std::string& name, int ch) {
    BnLayer b;
    b.name = name;
    b.gamma = Tensor::full({ch}, 1.0f);
    b.beta = Tensor({ch});
    b.state = BnState(ch);
    m.bns.push_back(std::move(b));
    return static_cast<int>(m.bns.size() - 1);
  };

  if (arch == Arch::TinyCnn) {
    conv("conv1", input_shape[0], 16, 3, 2, 1);
    bn("bn1", 16);
    conv("conv2", 16, 16, 3, 2, 1);
    bn("bn2", 16);
    Rng r = init.split(static_cast<std::uint64_t>(stream++));
    const float bound = 1.0f / std::sqrt(16.0f);
    m.head.name = "fc";
    m.head.w = Tensor({num_classes, 16});
    m.head.b = Tensor({num_classes});
    for (std::int64_t i = 0; i < m.head.w.numel(); ++i) m.head.w[i] = r.uniform(-bound, bound);
    for (std::int64_t i = 0; i < m.head.b.numel(); ++i) m.head.b[i] = r.uniform(-bound, bound);
    return m;
  }

  // preact_resnet18
  conv("stem", input_shape[0], 64, 3, 1, 1);
  int in_ch = 64;
  const int stage_ch[4] = {64, 128, 256, 512};
  for (int s = 0; s < 4; ++s) {
    for (int b = 0; b < 2; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const int out_ch = stage_ch[s];
      const std::string prefix = "layer" + std::to_string(s + 1) + "." + std::to_string(b) + ".";
      Block blk;
      blk.bn1 = bn(prefix + "bn1", in_ch);
      blk.conv1 = conv(prefix + "conv1", in_ch, out_ch, 3, stride, 1);
      blk.bn2 = bn(prefix + "bn2", out_ch);
      blk.conv2 = conv(prefix + "conv2", out_ch, out_ch, 3, 1, 1);
      blk.shortcut = (stride != 1 || in_ch != out_ch)
                         ? conv(prefix + "shortcut", in_ch, out_ch, 1, stride, 0)
                         : -1;
      m.blocks.push_back(blk);
      in_ch = out_ch;
    }
  }
  m.final_bn = bn("bn_final", in_ch);
  Rng r = init.split(static_cast<std::uint64_t>(stream++));
  const float bound = 1.0f / std::sqrt(static_cast<float>(in_ch));
  m.head.name = "fc";
  m.head.w = Tensor({num_classes, in_ch});
  m.head.b = Tensor({num_classes});
  for (std::int64_t i = 0; i < m.head.w.numel(); ++i) m.head.w[i] = r.uniform(-bound, bound);
  for (std::int64_t i = 0; i < m.head.b.numel(); ++i) m.head.b[i] = r.uniform(-bound, bound);
  return m;
}

std::vector<Classifier::ParamRef> Classifier::parameters() {
  std::vector<ParamRef> out;
  for (auto& c : convs) out.push_back({c.name + ".w", &c.w});
  for (auto& b : bns) {
    out.push_back({b.name + ".gamma", &b.gamma});
    out.push_back({b.name + ".beta", &b.beta});
  }
  out.push_back({head.name + ".w", &head.w});
  out.push_back({head.name + ".b", &head.b});
  return out;
}

std::vector<Classifier::ParamRef> Classifier::buffers() {
  std::vector<ParamRef> out;
  for (auto& b : bns) {
    out.push_back({b.name + ".running_mean", &b.state.running_mean});
    out.push_back({b.name + ".running_var", &b.state.running_var});
  }
  return out;
}

std::int64_t Classifier::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& c : convs) n += c.w.numel();
  for (const auto& b : bns) n += b.gamma.numel() + b.beta.numel();
  n += head.w.numel() + head.b.numel();
  return n;
}

void Classifier::check_input(const Tensor& x) const {
  if (x.rank() != 4 || x.size(1) != input_shape_[0] || x.size(2) != input_shape_[1] ||
      x.size(3) != input_shape_[2])
    throw std::invalid_argument("input shape " + x.shape_str() + " does not match model input [N," +
                                std::to_string(input_shape_[0]) + "," + std::to_string(input_shape_[1]) +
                                "," + std::to_string(input_shape_[2]) + "]");
}

Tensor Classifier::forward(const Tensor& x, BnMode mode) {
  Tape t;
  const Tape::Id xin = t.constant(x);
  BoundModel bm(t, *this, /*params_require_grad=*/false);
  return t.value(bm.forward(xin, mode));
}

void Classifier::capture_frozen_stats(const Tensor& x) {
  Tape t;
  const Tape::Id xin = t.constant(x);
  BoundModel bm(t, *this, false);
  (void)bm.forward(xin, BnMode::CaptureFrozen);
}

BoundModel::BoundModel(Tape& tape, Classifier& model, bool params_require_grad)
    : tape_(&tape), model_(&model) {
  for (auto& c : model.convs) {
    conv_w_.push_back(tape.leaf(c.w, params_require_grad));
    param_ids_.push_back(conv_w_.back());
  }
  for (auto& b : model.bns) {
    bn_gb_.push_back({tape.leaf(b.gamma, params_require_grad), tape.leaf(b.beta, params_require_grad)});
  }
  head_w_ = tape.leaf(model.head.w, params_require_grad);
  head_b_ = tape.leaf(model.head.b, params_require_grad);
  // parameter order must match Classifier::parameters()
  for (auto& gb : bn_gb_) {
    param_ids_.push_back(gb[0]);
    param_ids_.push_back(gb[1]);
  }
  param_ids_.push_back(head_w_);
  param_ids_.push_back(head_b_);
}

Tape::Id BoundModel::forward(Tape::Id x, BnMode mode) {
  Tape& t = *tape_;
  Classifier& m = *model_;
  m.check_input(t.value(x));

  auto conv = [&](int i, Tape::Id in) {
    const auto& c = m.convs[static_cast<std::size_t>(i)];
    return t.conv2d(in, conv_w_[static_cast<std::size_t>(i)], c.k, c.stride, c.pad);
  };
  auto bn = [&](int i, Tape::Id in) {
    auto& b = m.bns[static_cast<std::size_t>(i)];
    return t.batchnorm(in, bn_gb_[static_cast<std::size_t>(i)][0], bn_gb_[static_cast<std::size_t>(i)][1],
                       &b.state, mode, b.momentum, b.eps);
  };

  if (m.arch() == Arch::TinyCnn) {
    Tape::Id h = t.relu(bn(0, conv(0, x)));
    h = t.relu(bn(1, conv(1, h)));
    return t.linear(t.global_avg_pool(h), head_w_, head_b_);
  }

  Tape::Id h = conv(0, x);
  for (const auto& blk : m.blocks) {
    const Tape::Id pre = t.relu(bn(blk.bn1, h));
    const Tape::Id shortcut = blk.shortcut >= 0 ? conv(blk.shortcut, pre) : h;
    Tape::Id out = conv(blk.conv1, pre);
    out = conv(blk.conv2, t.relu(bn(blk.bn2, out)));
    h = t.add(out, shortcut);
  }
  h = t.relu(bn(m.final_bn, h));
  return t.linear(t.global_avg_pool(h), head_w_, head_b_);
}

Tensor BoundModel::param_gradient(std::size_t i) const {
  return tape_->gradient(param_ids_.at(i));
}

Tensor input_gradient(Classifier& model, const Tensor& x, const std::vector<std::int32_t>& labels,
                      LossKind loss_kind, const Tensor* reference_probs, BnMode bn_mode) {
  Tape t;
  const Tape::Id xin = t.leaf(x, /*requires_grad=*/true);
  BoundModel bm(t, model, /*params_require_grad=*/false);
  const Tape::Id logits = bm.forward(xin, bn_mode);

  Tape::Id rows = -1;
  switch (loss_kind) {
    case LossKind::CrossEntropy:
      rows = ce_rows_graph(t, logits, labels);
      break;
    case LossKind::KlToReference: {
      if (reference_probs == nullptr)
        throw std::invalid_argument("KlToReference needs a reference distribution");
      const Tape::Id ref = t.constant(*reference_probs);
      rows = kl_rows_graph(t, ref, t.softmax_rows(logits, 1.0f));
      break;
    }
    case LossKind::CwMargin:
      rows = cw_margin_rows_graph(t, logits, labels);
      break;
  }
  t.backward(t.mean_all(rows));
  return t.gradient(xin);
}

}  // namespace conrad
