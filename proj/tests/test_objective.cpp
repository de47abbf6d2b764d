#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "conrad/losses.hpp"
#include "conrad/objective.hpp"
#include "testutil.hpp"

using namespace conrad;
using namespace conrad::testutil;

TEST_SUITE("softmax_temperature") {
  TEST_CASE("hand values") {
    Tensor z = Tensor::from_vector({2, 2}, {0.0f, 0.0f, 1.0f, 0.0f});
    for (double tau : {0.1, 0.5, 1.0, 3.0}) {
      ProbBatch p = softmax_temperature(z, tau);
      CHECK(p.p.at2(0, 0) == doctest::Approx(0.5));
      CHECK(p.p.at2(0, 1) == doctest::Approx(0.5));
    }
    ProbBatch p1 = softmax_temperature(z, 1.0);
    CHECK(p1.p.at2(1, 0) == doctest::Approx(std::exp(1.0) / (std::exp(1.0) + 1.0)).epsilon(1e-6));
    CHECK(p1.p.at2(1, 1) == doctest::Approx(1.0 / (std::exp(1.0) + 1.0)).epsilon(1e-6));
    ProbBatch p05 = softmax_temperature(z, 0.5);
    CHECK(p05.p.at2(1, 0) > p1.p.at2(1, 0));  // tau < 1 sharpens
    p1.validate();
    CHECK_THROWS_AS((void)softmax_temperature(z, 0.0), std::invalid_argument);
    CHECK_THROWS_AS((void)softmax_temperature(z, -1.0), std::invalid_argument);
  }

  TEST_CASE("argmax preserved for every temperature (property)") {
    Rng rng(41, 0);
    for (int trial = 0; trial < 2000; ++trial) {
      Tensor z = random_tensor({1, 7}, rng, -4.0f, 4.0f);
      const std::int32_t ref = argmax_row(z, 0);
      for (double tau : {0.1, 0.5, 1.0, 2.0, 5.0}) {
        ProbBatch p = softmax_temperature(z, tau);
        CHECK(argmax_row(p.p, 0) == ref);
      }
    }
  }
}

TEST_SUITE("divergences") {
  TEST_CASE("kl hand values and asymmetry") {
    CHECK(kl_divergence({0.3f, 0.7f}, {0.3f, 0.7f}) == doctest::Approx(0.0));
    CHECK(kl_divergence({1.0f, 0.0f}, {0.5f, 0.5f}) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    const double ab = kl_divergence({0.8f, 0.2f}, {0.5f, 0.5f});
    const double ba = kl_divergence({0.5f, 0.5f}, {0.8f, 0.2f});
    CHECK(ab != doctest::Approx(ba).epsilon(1e-6));
    CHECK(ab > 0.0);
    CHECK(ba > 0.0);
  }

  TEST_CASE("js hand values, symmetry, bounds") {
    CHECK(js_divergence({{0.2f, 0.8f}, {0.2f, 0.8f}}) == doctest::Approx(0.0));
    CHECK(js_divergence({{1.0f, 0.0f}, {0.0f, 1.0f}}) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
    CHECK(js_divergence({{0.4f, 0.6f}, {0.4f, 0.6f}, {0.4f, 0.6f}}) == doctest::Approx(0.0));
    Rng rng(42, 0);
    for (int trial = 0; trial < 300; ++trial) {
      ProbBatch a = softmax_temperature(random_tensor({1, 5}, rng, -3.0f, 3.0f), 1.0);
      ProbBatch b = softmax_temperature(random_tensor({1, 5}, rng, -3.0f, 3.0f), 1.0);
      ProbBatch c = softmax_temperature(random_tensor({1, 5}, rng, -3.0f, 3.0f), 1.0);
      std::vector<float> va(a.p.vec()), vb(b.p.vec()), vc(c.p.vec());
      const double ab = js_divergence({va, vb});
      CHECK(ab == doctest::Approx(js_divergence({vb, va})).epsilon(1e-9));
      CHECK(ab >= 0.0);
      CHECK(ab <= std::log(2.0) + 1e-9);
      const double abc = js_divergence({va, vb, vc});
      CHECK(abc >= 0.0);
      CHECK(abc <= std::log(3.0) + 1e-9);
    }
    CHECK_THROWS_AS((void)js_divergence({{0.5f, 0.5f}}), std::invalid_argument);
    CHECK_THROWS_AS((void)js_divergence({{0.5f, 0.5f}, {1.0f, 0.0f, 0.0f}}), std::invalid_argument);
  }

  TEST_CASE("cross entropy hand values and monotonicity") {
    ProbBatch onehot{Tensor::from_vector({1, 3}, {0.0f, 1.0f, 0.0f})};
    CHECK(cross_entropy(onehot, {1}) == doctest::Approx(0.0).epsilon(1e-9));
    ProbBatch uniform{Tensor::full({1, 10}, 0.1f)};
    CHECK(cross_entropy(uniform, {3}) == doctest::Approx(std::log(10.0)).epsilon(1e-6));
    double prev = 1e9;
    for (float py : {0.1f, 0.3f, 0.5f, 0.9f}) {
      ProbBatch p{Tensor::from_vector({1, 2}, {py, 1.0f - py})};
      const double ce = cross_entropy(p, {0});
      CHECK(ce < prev);
      prev = ce;
    }
  }

  TEST_CASE("mse symmetric, kl directional") {
    ProbBatch a{Tensor::from_vector({1, 2}, {1.0f, 0.0f})};
    ProbBatch b{Tensor::from_vector({1, 2}, {0.0f, 1.0f})};
    CHECK(mse_cr(a, b) == doctest::Approx(2.0));
    CHECK(mse_cr(a, a) == doctest::Approx(0.0));
    ProbBatch c{Tensor::from_vector({1, 2}, {0.8f, 0.2f})};
    ProbBatch d{Tensor::from_vector({1, 2}, {0.5f, 0.5f})};
    CHECK(mse_cr(c, d) == doctest::Approx(mse_cr(d, c)).epsilon(1e-9));
    CHECK(kl_cr(c, d) != doctest::Approx(kl_cr(d, c)).epsilon(1e-6));
    CHECK(kl_cr(c, c) == doctest::Approx(0.0));
  }
}

TEST_SUITE("model-coupled regularizers") {
  TEST_CASE("consistency loss: zero at equal branches, swap invariant") {
    Classifier m = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(50, 0));
    Rng rng(51, 0);
    ImageBatch x{random_tensor({4, 3, 32, 32}, rng, 0.0f, 1.0f)};
    ImageBatch y{random_tensor({4, 3, 32, 32}, rng, 0.0f, 1.0f)};
    CHECK(consistency_loss(m, x, x, 0.5) == doctest::Approx(0.0).epsilon(1e-7));
    const double xy = consistency_loss(m, x, y, 0.5);
    CHECK(xy == doctest::Approx(consistency_loss(m, y, x, 0.5)).epsilon(1e-7));
    CHECK(xy > 0.0);
    CHECK_THROWS_AS((void)consistency_loss(m, x, y, 0.0), std::invalid_argument);
  }

  TEST_CASE("conventional_cr equals js of forward distributions") {
    Classifier m = Classifier::make(Arch::TinyCnn, 6, {3, 32, 32}, Rng(52, 0));
    Rng rng(53, 0);
    ImageBatch x{random_tensor({3, 3, 32, 32}, rng, 0.0f, 1.0f)};
    ImageBatch y{random_tensor({3, 3, 32, 32}, rng, 0.0f, 1.0f)};
    const double got = conventional_cr(m, x, y);
    ProbBatch px = softmax_temperature(m.forward(x.data, BnMode::Eval), 1.0);
    ProbBatch py = softmax_temperature(m.forward(y.data, BnMode::Eval), 1.0);
    double expect = 0.0;
    for (std::int64_t i = 0; i < 3; ++i) {
      std::vector<float> a(6), b(6);
      for (std::int64_t k = 0; k < 6; ++k) {
        a[static_cast<std::size_t>(k)] = px.p.at2(i, k);
        b[static_cast<std::size_t>(k)] = py.p.at2(i, k);
      }
      expect += js_divergence({a, b});
    }
    expect /= 3.0;
    CHECK(got == doctest::Approx(expect).epsilon(1e-5));
    // crisp witness that the two op definitions differ once perturbations
    // are nonzero: identical clean branches give zero conventional CR, but
    // independently perturbed branches give positive consistency loss
    ImageBatch xa = x, xb = x;
    Rng noise(99, 0);
    for (std::int64_t i = 0; i < xa.data.numel(); ++i) {
      xa.data[i] = std::clamp(xa.data[i] + noise.uniform(-8.0f / 255.0f, 8.0f / 255.0f), 0.0f, 1.0f);
      xb.data[i] = std::clamp(xb.data[i] + noise.uniform(-8.0f / 255.0f, 8.0f / 255.0f), 0.0f, 1.0f);
    }
    CHECK(conventional_cr(m, x, x) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(consistency_loss(m, xa, xb, 1.0) > 1e-7);
  }

  TEST_CASE("augmix_cr: zero at identical triples, branch permutation invariant") {
    Classifier m = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(54, 0));
    Rng rng(55, 0);
    ImageBatch a{random_tensor({2, 3, 32, 32}, rng, 0.0f, 1.0f)};
    ImageBatch b{random_tensor({2, 3, 32, 32}, rng, 0.0f, 1.0f)};
    ImageBatch c{random_tensor({2, 3, 32, 32}, rng, 0.0f, 1.0f)};
    CHECK(augmix_cr(m, a, a, a) == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(augmix_cr(m, a, b, c) == doctest::Approx(augmix_cr(m, a, c, b)).epsilon(1e-7));
  }
}

TEST_SUITE("total_loss") {
  // reference single-branch objectives computed with eager math only
  namespace ref {
    double at_loss(Classifier& m, const Tensor& adv, const std::vector<std::int32_t>& y,
                   BnMode mode) {
      return cross_entropy(softmax_temperature(m.forward(adv, mode), 1.0), y);
    }
  }  // namespace ref

  TEST_CASE("lambda 0 with identical branches reduces to the plain method loss") {
    Classifier m = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(60, 0));
    Rng rng(61, 0);
    Tensor clean = random_tensor({5, 3, 32, 32}, rng, 0.0f, 1.0f);
    Tensor adv = clean;
    for (std::int64_t i = 0; i < adv.numel(); ++i)
      adv[i] = std::clamp(adv[i] + rng.uniform(-8.0f / 255.0f, 8.0f / 255.0f), 0.0f, 1.0f);
    std::vector<std::int32_t> y = {0, 1, 2, 3, 4};

    LossConfig cfg;
    cfg.method = Method::AT;
    cfg.lambda = 0.0;
    BranchBatch b{clean, adv};

    Tape t;
    BoundModel bm(t, m, false);
    TotalLoss loss = total_loss_graph(t, bm, y, b, b, nullptr, cfg, BnMode::Eval);
    CHECK(loss.values.total == doctest::Approx(ref::at_loss(m, adv, y, BnMode::Eval)).epsilon(1e-6));
    CHECK(loss.values.consistency == 0.0);
  }

  TEST_CASE("TRADES with beta 0 and zero perturbation is the clean CE") {
    Classifier m = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(62, 0));
    Rng rng(63, 0);
    Tensor clean = random_tensor({4, 3, 32, 32}, rng, 0.0f, 1.0f);
    std::vector<std::int32_t> y = {1, 2, 3, 4};
    LossConfig cfg;
    cfg.method = Method::TRADES;
    cfg.beta = 0.0;
    cfg.lambda = 0.0;
    BranchBatch b{clean, clean};
    Tape t;
    BoundModel bm(t, m, false);
    TotalLoss loss = total_loss_graph(t, bm, y, b, b, nullptr, cfg, BnMode::Eval);
    const double clean_ce = cross_entropy(softmax_temperature(m.forward(clean, BnMode::Eval), 1.0), y);
    CHECK(loss.values.total == doctest::Approx(clean_ce).epsilon(1e-6));
    CHECK(loss.values.robust_kl >= 0.0);
  }

  TEST_CASE("breakdown terms sum to the total for every method and regularizer") {
    Classifier m = Classifier::make(Arch::TinyCnn, 8, {3, 32, 32}, Rng(64, 0));
    Rng rng(65, 0);
    Tensor c1 = random_tensor({3, 3, 32, 32}, rng, 0.0f, 1.0f);
    Tensor c2 = random_tensor({3, 3, 32, 32}, rng, 0.0f, 1.0f);
    Tensor a1 = c1, a2 = c2;
    for (std::int64_t i = 0; i < a1.numel(); ++i) {
      a1[i] = std::clamp(a1[i] + rng.uniform(-0.03f, 0.03f), 0.0f, 1.0f);
      a2[i] = std::clamp(a2[i] + rng.uniform(-0.03f, 0.03f), 0.0f, 1.0f);
    }
    Tensor base = random_tensor({3, 3, 32, 32}, rng, 0.0f, 1.0f);
    std::vector<std::int32_t> y = {0, 3, 7};

    for (Method method : {Method::AT, Method::TRADES, Method::MART}) {
      for (Regularizer reg : {Regularizer::None, Regularizer::JsConsistency,
                              Regularizer::ConventionalCr, Regularizer::MseCr, Regularizer::KlCr,
                              Regularizer::AugmixCr}) {
        LossConfig cfg;
        cfg.method = method;
        cfg.regularizer = reg;
        cfg.lambda = 0.7;
        Tape t;
        BoundModel bm(t, m, false);
        TotalLoss loss = total_loss_graph(t, bm, y, {c1, a1}, {c2, a2}, &base, cfg, BnMode::Eval);
        CHECK(loss.values.consistent(cfg.lambda, 1e-5));
        CHECK(std::isfinite(loss.values.total));
        if (reg != Regularizer::None) CHECK(loss.values.consistency > 0.0);
      }
    }
  }

  TEST_CASE("MART: saturated clean prediction zeroes the KL weight") {
    // With p_clean(y) == 1 the factor (1 - p_clean_y) vanishes; verified on
    // the formula pieces rather than a trained model.
    Tape t;
    const auto p_clean = t.constant(Tensor::from_vector({1, 3}, {0.0f, 1.0f, 0.0f}));
    const auto weight = t.affine(t.gather_label(p_clean, {1}), -1.0f, 1.0f);
    CHECK(t.value(weight)[0] == doctest::Approx(0.0));
  }

  TEST_CASE("consistency decreases as branch logits interpolate toward their mean") {
    Rng rng(66, 0);
    for (int trial = 0; trial < 50; ++trial) {
      Tensor z1 = random_tensor({2, 6}, rng, -3.0f, 3.0f);
      Tensor z2 = random_tensor({2, 6}, rng, -3.0f, 3.0f);
      double prev = 1e9;
      for (double tt = 0.0; tt <= 1.0 + 1e-9; tt += 0.25) {
        Tensor i1 = z1, i2 = z2;
        for (std::int64_t i = 0; i < z1.numel(); ++i) {
          const float mid = 0.5f * (z1[i] + z2[i]);
          i1[i] = z1[i] + static_cast<float>(tt) * (mid - z1[i]);
          i2[i] = z2[i] + static_cast<float>(tt) * (mid - z2[i]);
        }
        Tape t;
        const auto js = js_rows_graph(t, {t.softmax_rows(t.constant(i1), 0.5f),
                                          t.softmax_rows(t.constant(i2), 0.5f)});
        const double v = t.value(t.mean_all(js))[0];
        CHECK(v <= prev + 1e-7);
        prev = v;
      }
      CHECK(prev <= 1e-7);  // identical at t == 1
    }
  }

  TEST_CASE("gradients of the full objective match finite differences") {
    Classifier m = Classifier::make(Arch::TinyCnn, 5, {3, 32, 32}, Rng(67, 0));
    Rng rng(68, 0);
    Tensor c1 = random_tensor({2, 3, 32, 32}, rng, 0.0f, 1.0f);
    Tensor c2 = random_tensor({2, 3, 32, 32}, rng, 0.0f, 1.0f);
    Tensor a1 = c1, a2 = c2;
    for (std::int64_t i = 0; i < a1.numel(); ++i) {
      a1[i] = std::clamp(a1[i] + rng.uniform(-0.03f, 0.03f), 0.0f, 1.0f);
      a2[i] = std::clamp(a2[i] + rng.uniform(-0.03f, 0.03f), 0.0f, 1.0f);
    }
    std::vector<std::int32_t> y = {1, 4};

    LossConfig cfg;
    cfg.method = Method::TRADES;
    cfg.regularizer = Regularizer::JsConsistency;
    cfg.lambda = 1.0;

    auto params = m.parameters();
    std::vector<Tensor> grads;
    {
      Tape t;
      BoundModel bm(t, m, true);
      TotalLoss loss = total_loss_graph(t, bm, y, {c1, a1}, {c2, a2}, nullptr, cfg, BnMode::Train);
      t.backward(loss.node);
      for (std::size_t i = 0; i < params.size(); ++i) grads.push_back(bm.param_gradient(i));
    }
    auto eval = [&]() -> double {
      Tape t;
      BoundModel bm(t, m, false);
      return total_loss_graph(t, bm, y, {c1, a1}, {c2, a2}, nullptr, cfg, BnMode::Train).values.total;
    };
    // the head carries the best-conditioned gradients; spot-check there plus
    // a bn tensor
    std::vector<double> fd, an;
    Rng pick(69, 0);
    const std::size_t head_w = params.size() - 2;
    for (std::int64_t c : pick_coords(params[head_w].tensor->numel(), 6, pick)) {
      fd.push_back(fd_derivative(eval, &(*params[head_w].tensor)[c], 1e-2));
      an.push_back(grads[head_w][c]);
    }
    CHECK(vector_rel_err(fd, an) < 5e-3);
  }
}
