#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "conrad/eval.hpp"
#include "conrad/train.hpp"

using namespace conrad;
namespace fs = std::filesystem;

namespace {

TrainConfig smoke_config(std::uint64_t seed) {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 16;
  c.lr = 0.05;
  c.seed = seed;
  c.arch = Arch::TinyCnn;
  c.num_classes = 10;
  c.attack.threat.steps = 2;  // keep unit tests quick
  c.policy = AugmentPolicy::named(PolicyName::Base);
  c.loss.regularizer = Regularizer::JsConsistency;
  c.loss.lambda = 1.0;
  return c;
}

fs::path fresh_dir(const std::string& tag) {
  fs::path p = fs::temp_directory_path() / ("conrad_train_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool params_equal(Classifier& a, Classifier& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].tensor->numel() != pb[i].tensor->numel()) return false;
    if (std::memcmp(pa[i].tensor->data(), pb[i].tensor->data(),
                    static_cast<std::size_t>(pa[i].tensor->numel()) * 4) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_SUITE("schedule") {
  TEST_CASE("learning rate drops by 10x at 50% and 75%") {
    TrainConfig c;
    c.epochs = 200;
    c.lr = 0.1;
    CHECK(c.lr_at_epoch(99) == doctest::Approx(0.1));
    CHECK(c.lr_at_epoch(100) == doctest::Approx(0.01));
    CHECK(c.lr_at_epoch(149) == doctest::Approx(0.01));
    CHECK(c.lr_at_epoch(150) == doctest::Approx(0.001));
    CHECK(c.lr_at_epoch(200) == doctest::Approx(0.001));
  }

  TEST_CASE("halving the budget preserves the milestone fractions") {
    TrainConfig c;
    c.epochs = 200;
    TrainConfig h = halve_epoch_budget(c);
    CHECK(h.epochs == 100);
    CHECK(h.milestone(1) == 50);
    CHECK(h.milestone(2) == 75);
    TrainConfig q = halve_epoch_budget(h);
    CHECK(q.epochs == 50);
    CHECK(q.milestone(1) == 25);
    CHECK(q.milestone(2) == 38);  // ceil(0.75 * 50)
  }

  TEST_CASE("mismatched attack loss kind is rejected") {
    TrainConfig c = smoke_config(1);
    c.loss.method = Method::TRADES;  // requires kl_to_reference
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c.attack.loss_kind = LossKind::KlToReference;
    CHECK_NOTHROW(c.validate());
  }
}

TEST_SUITE("train_step") {
  TEST_CASE("loss finite, parameters move, deterministic under a seed") {
    DatasetSplit data = make_synthetic_split(32, 16, 5);
    LabeledBatch batch = slice_batch(data.train, 0, 16);
    TrainConfig cfg = smoke_config(3);

    auto run_steps = [&](int steps) {
      TrainState s;
      s.model = Classifier::make(cfg.arch, cfg.num_classes, cfg.input_shape, Rng(cfg.seed, 1));
      for (int i = 0; i < steps; ++i) {
        const LossBreakdown b =
            train_step(s, batch, cfg, 0.05, Rng(cfg.seed, 3).split(static_cast<std::uint64_t>(i)));
        CHECK(std::isfinite(b.total));
        CHECK(b.consistent(cfg.loss.lambda, 1e-5));
      }
      return s;
    };

    TrainState once = run_steps(1);
    Classifier fresh = Classifier::make(cfg.arch, cfg.num_classes, cfg.input_shape, Rng(cfg.seed, 1));
    CHECK_FALSE(params_equal(once.model, fresh));

    TrainState a = run_steps(3);
    TrainState b = run_steps(3);
    CHECK(params_equal(a.model, b.model));
  }

  TEST_CASE("lambda 0 with no augmentation reproduces a reference standard-AT step bit-exactly") {
    DatasetSplit data = make_synthetic_split(64, 16, 6);
    TrainConfig cfg = smoke_config(7);
    cfg.policy = AugmentPolicy::named(PolicyName::None);
    cfg.loss.regularizer = Regularizer::None;
    cfg.loss.lambda = 0.0;
    cfg.attack = attack_preset("pgd10_train");

    TrainState ours;
    ours.model = Classifier::make(cfg.arch, cfg.num_classes, cfg.input_shape, Rng(cfg.seed, 1));
    Classifier ref = Classifier::make(cfg.arch, cfg.num_classes, cfg.input_shape, Rng(cfg.seed, 1));
    Sgd ref_opt;
    ref_opt.momentum = static_cast<float>(cfg.momentum);
    ref_opt.weight_decay = static_cast<float>(cfg.weight_decay);

    for (int i = 0; i < 10; ++i) {
      LabeledBatch batch = slice_batch(data.train, (i % 4) * 16, 16);
      train_step(ours, batch, cfg, 0.05, Rng(cfg.seed, 3).split(static_cast<std::uint64_t>(i)));

      // independent single-branch standard-AT step
      ref.capture_frozen_stats(batch.images.data);
      AttackResult r = pgd(ref, batch, cfg.attack, nullptr, Rng(0, 0), BnMode::Frozen);
      Tape t;
      BoundModel bm(t, ref, true);
      const auto logits = bm.forward(t.constant(r.adversarial.data), BnMode::Train);
      t.backward(t.mean_all(ce_rows_graph(t, logits, batch.labels)));
      auto params = ref.parameters();
      std::vector<Tensor> grads;
      for (std::size_t p = 0; p < params.size(); ++p) grads.push_back(bm.param_gradient(p));
      ref_opt.step(params, grads, 0.05f);

      CHECK(params_equal(ours.model, ref));
    }
  }
}

TEST_SUITE("run_training") {
  TEST_CASE("zero epochs returns the initial model and empty metrics") {
    DatasetSplit data = make_synthetic_split(32, 16, 9);
    TrainConfig cfg = smoke_config(9);
    cfg.epochs = 0;
    const fs::path dir = fresh_dir("zero");
    RunResult r = run_training(cfg, data, dir.string(), "h0");
    CHECK(r.history.empty());
    LoadedCheckpoint lc = load_checkpoint(r.last_path);
    Classifier init = Classifier::make(cfg.arch, cfg.num_classes, cfg.input_shape, Rng(cfg.seed, 1));
    CHECK(params_equal(lc.model, init));
  }

  TEST_CASE("two epochs: metrics rows, best >= last, csv reproducibility") {
    DatasetSplit data = make_synthetic_split(48, 24, 10);
    TrainConfig cfg = smoke_config(11);
    const fs::path dir_a = fresh_dir("a");
    const fs::path dir_b = fresh_dir("b");
    RunResult ra = run_training(cfg, data, dir_a.string(), "hash_a");
    RunResult rb = run_training(cfg, data, dir_b.string(), "hash_a");

    REQUIRE(ra.history.size() == 2);
    CHECK(ra.history[0].epoch == 1);
    // epochs=2 derives milestones 1 and 2: both drops fire by the last epoch
    CHECK(ra.history[0].lr == doctest::Approx(0.005));
    CHECK(ra.history[1].lr == doctest::Approx(0.0005));
    double best = -1.0;
    for (const auto& row : ra.history) best = std::max(best, row.pgd10_acc);
    CHECK(ra.best_pgd10 == doctest::Approx(best));
    LoadedCheckpoint best_ck = load_checkpoint(ra.best_path);
    LoadedCheckpoint last_ck = load_checkpoint(ra.last_path);
    CHECK(best_ck.meta.pgd10_acc >= last_ck.meta.pgd10_acc);

    CHECK(file_bytes((dir_a / "metrics.csv").string()) ==
          file_bytes((dir_b / "metrics.csv").string()));
    CHECK(metrics_config_hash((dir_a / "metrics.csv").string()) == "hash_a");
  }

  TEST_CASE("resume equivalence: 4 epochs equals 2 + resume 2") {
    DatasetSplit data = make_synthetic_split(48, 16, 12);
    TrainConfig four = smoke_config(13);
    four.epochs = 4;
    const fs::path dir_full = fresh_dir("full");
    RunResult rf = run_training(four, data, dir_full.string(), "hh");

    // Simulate an interruption after two epochs: same schedule (explicit
    // milestones from the 4-epoch budget), smaller epoch count.
    TrainConfig two = four;
    two.epochs = 2;
    two.milestone1 = four.milestone(1);
    two.milestone2 = four.milestone(2);
    const fs::path dir_resume = fresh_dir("resume");
    run_training(two, data, dir_resume.string(), "hh");
    RunResult rr = run_training(four, data, dir_resume.string(), "hh");

    LoadedCheckpoint full_ck = load_checkpoint(rf.last_path);
    LoadedCheckpoint res_ck = load_checkpoint(rr.last_path);
    CHECK(params_equal(full_ck.model, res_ck.model));
    CHECK(file_bytes((dir_full / "metrics.csv").string()) ==
          file_bytes((dir_resume / "metrics.csv").string()));
  }

  TEST_CASE("resume refuses a foreign config hash") {
    DatasetSplit data = make_synthetic_split(32, 16, 14);
    TrainConfig cfg = smoke_config(15);
    cfg.epochs = 1;
    const fs::path dir = fresh_dir("foreign");
    run_training(cfg, data, dir.string(), "hash_one");
    CHECK_THROWS_AS((void)run_training(cfg, data, dir.string(), "hash_two"), std::runtime_error);
  }

  TEST_CASE("recorded best equals the running maximum of the rows") {
    DatasetSplit data = make_synthetic_split(48, 16, 16);
    TrainConfig cfg = smoke_config(17);
    cfg.epochs = 3;
    const fs::path dir = fresh_dir("bestmax");
    RunResult r = run_training(cfg, data, dir.string(), "hb");
    double running = -1.0;
    for (const auto& row : r.history) running = std::max(running, row.pgd10_acc);
    CHECK(r.best_pgd10 == doctest::Approx(running));
  }
}
