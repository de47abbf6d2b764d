#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "conrad/eval.hpp"
#include "conrad/npy.hpp"

using namespace conrad;
namespace fs = std::filesystem;

namespace {

DatasetSplit tiny_data(std::uint64_t seed, std::int64_t train = 64, std::int64_t test = 48) {
  return make_synthetic_split(train, test, seed, 0.0);
}

AttackSpec quick_attack(double eps = 8.0 / 255.0, int steps = 3) {
  AttackSpec s;
  s.threat = {Norm::LInf, eps, steps, 2.0 * eps / steps, false};
  return s;
}

}  // namespace

TEST_SUITE("robust accuracy") {
  TEST_CASE("epsilon 0 equals clean accuracy exactly") {
    Classifier m = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(90, 0));
    DatasetSplit d = tiny_data(1);
    AttackSpec spec = quick_attack();
    spec.threat.epsilon = 0.0;
    const double clean = clean_accuracy(m, d.test, 16);
    const double robust = robust_accuracy(m, d.test, spec, Rng(1, 1), 16);
    CHECK(robust == clean);
  }

  TEST_CASE("untrained model sits near chance, attack pushes below clean") {
    Classifier m = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(91, 0));
    DatasetSplit d = tiny_data(2, 64, 400);
    const double clean = clean_accuracy(m, d.test, 64);
    CHECK(clean < 35.0);  // chance is 10% on 10 balanced classes
    const double robust = robust_accuracy(m, d.test, quick_attack(), Rng(2, 2), 64);
    CHECK(robust <= clean + 0.5);
  }

  TEST_CASE("results are reproducible under a fixed seed") {
    Classifier m = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(92, 0));
    DatasetSplit d = tiny_data(3);
    AttackSpec spec = quick_attack();
    spec.threat.random_start = true;
    const double a = robust_accuracy(m, d.test, spec, Rng(7, 7), 16);
    const double b = robust_accuracy(m, d.test, spec, Rng(7, 7), 16);
    CHECK(a == b);
  }
}

TEST_SUITE("transfer") {
  TEST_CASE("self-transfer equals white-box accuracy") {
    Classifier m = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(93, 0));
    DatasetSplit d = tiny_data(4);
    AttackSpec spec = quick_attack();
    const double white = robust_accuracy(m, d.test, spec, Rng(3, 3), 16);
    const double self_transfer = black_box_transfer(m, m, d.test, spec, Rng(3, 3), 16);
    CHECK(white == self_transfer);
  }

  TEST_CASE("epsilon 0 transfer yields the target's clean accuracy") {
    Classifier src = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(94, 0));
    Classifier tgt = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(95, 0));
    DatasetSplit d = tiny_data(5);
    AttackSpec spec = quick_attack();
    spec.threat.epsilon = 0.0;
    CHECK(black_box_transfer(src, tgt, d.test, spec, Rng(4, 4), 16) ==
          clean_accuracy(tgt, d.test, 16));
  }
}

TEST_SUITE("unseen sweep") {
  TEST_CASE("emits exactly the six cells") {
    Classifier m = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(96, 0));
    DatasetSplit d = tiny_data(6, 32, 16);
    auto cells = unseen_sweep(m, d.test, Rng(5, 5), 16, /*steps=*/2);
    REQUIRE(cells.size() == 6);
    CHECK(cells[0].p == Norm::LInf);
    CHECK(cells[0].epsilon == doctest::Approx(4.0 / 255.0));
    CHECK(cells[1].epsilon == doctest::Approx(16.0 / 255.0));
    CHECK(cells[2].p == Norm::L2);
    CHECK(cells[2].epsilon == doctest::Approx(150.0 / 255.0));
    CHECK(cells[3].epsilon == doctest::Approx(300.0 / 255.0));
    CHECK(cells[4].p == Norm::L1);
    CHECK(cells[4].epsilon == doctest::Approx(2000.0 / 255.0));
    CHECK(cells[5].epsilon == doctest::Approx(4000.0 / 255.0));
    for (const auto& c : cells) {
      CHECK(c.accuracy >= 0.0);
      CHECK(c.accuracy <= 100.0);
    }
    // nested linf balls: smaller budget can only help
    CHECK(cells[0].accuracy >= cells[1].accuracy - 0.5);
  }
}

TEST_SUITE("mce") {
  // Corruption fixtures whose labels are engineered against the model's own
  // predictions, making every error count exact.
  struct Fixture {
    fs::path dir;
    Classifier model = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(97, 0));

    // per_severity_wrong[s] of the `count` images in severity s+1 disagree
    void write_type(const std::string& name, const std::vector<int>& per_severity_wrong,
                    std::int64_t count, std::uint64_t seed) {
      Rng rng(seed, 0);
      const std::int64_t total = 5 * count;
      std::vector<std::uint8_t> pixels(static_cast<std::size_t>(total * 32 * 32 * 3));
      for (auto& b : pixels) b = static_cast<std::uint8_t>(rng.next_below(256));
      npy_save_u8((dir / (name + ".npy")).string(), {total, 32, 32, 3}, pixels);

      // labels length = per-severity count (broadcast layout)
      // match predictions except the first `wrong` images of each severity.
      // Broadcast labels must work for all severities, so instead use the
      // full-length layout.
      std::vector<std::int64_t> labels(static_cast<std::size_t>(total));
      NpyArray imgs = npy_load((dir / (name + ".npy")).string());
      CorruptionFile cf;
      cf.name = name;
      cf.images = std::move(imgs);
      cf.labels.i64.assign(static_cast<std::size_t>(total), 0);
      cf.labels.shape = {total};
      cf.per_severity = count;
      for (int s = 1; s <= 5; ++s) {
        LabeledBatch b = cf.batch(s, 0, count);
        const Tensor logits = model.forward(b.images.data, BnMode::Eval);
        for (std::int64_t i = 0; i < count; ++i) {
          const std::int32_t pred = argmax_row(logits, i);
          const bool wrong = i < per_severity_wrong[static_cast<std::size_t>(s - 1)];
          labels[static_cast<std::size_t>((s - 1) * count + i)] =
              wrong ? (pred + 1) % 10 : pred;
        }
      }
      npy_save_i64((dir / "labels.npy").string(), {total}, labels);
    }
  };

  TEST_CASE("accounting identities on synthetic predictions") {
    Fixture f;
    f.dir = fs::temp_directory_path() / "conrad_test_mce";
    fs::remove_all(f.dir);
    fs::create_directories(f.dir);

    // one type, 4 images per severity, wrong counts 0,1,2,3,4 -> errors
    // 0,25,50,75,100 with mean 50
    f.write_type("snow", {0, 1, 2, 3, 4}, 4, 11);
    auto [mce_value, per_type] = mce(f.model, f.dir.string(), 16);
    REQUIRE(per_type.size() == 1);
    CHECK(per_type[0].first == "snow");
    CHECK(per_type[0].second == doctest::Approx(50.0));
    CHECK(mce_value == doctest::Approx(50.0));
  }

  TEST_CASE("all-zero error gives zero mCE; missing types are skipped with warning") {
    Fixture f;
    f.dir = fs::temp_directory_path() / "conrad_test_mce0";
    fs::remove_all(f.dir);
    fs::create_directories(f.dir);
    f.write_type("fog", {0, 0, 0, 0, 0}, 4, 12);
    std::ostringstream warn;
    auto [mce_value, per_type] = mce(f.model, f.dir.string(), 16, &warn);
    CHECK(mce_value == doctest::Approx(0.0));
    CHECK(per_type.size() == 1);
    CHECK(warn.str().find("snow") != std::string::npos);  // 18 others warned
  }

  TEST_CASE("empty directory is an error") {
    const fs::path dir = fs::temp_directory_path() / "conrad_test_mce_empty";
    fs::remove_all(dir);
    fs::create_directories(dir);
    Classifier m = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(98, 0));
    CHECK_THROWS((void)mce(m, dir.string(), 16));
  }
}

TEST_SUITE("confusing class rate") {
  TEST_CASE("binary classification makes the rate 100% by construction") {
    Classifier m = Classifier::make(Arch::TinyCnn, 2, {3, 32, 32}, Rng(99, 0));
    DatasetSplit d = tiny_data(7, 32, 64);
    LabeledBatch test = d.test;
    for (auto& y : test.labels) y = y % 2;
    auto rate = confusing_class_rate(m, test, quick_attack(), Rng(6, 6), 16);
    REQUIRE(rate.has_value());
    CHECK(*rate == doctest::Approx(100.0));
  }

  TEST_CASE("no misclassification reports absent") {
    Classifier m = Classifier::make(Arch::TinyCnn, 10, {3, 32, 32}, Rng(100, 0));
    DatasetSplit d = tiny_data(8, 16, 24);
    LabeledBatch test = d.test;
    // labels := model predictions, so a degenerate attack misclassifies nothing
    const Tensor logits = m.forward(test.images.data, BnMode::Eval);
    for (std::int64_t i = 0; i < test.count(); ++i)
      test.labels[static_cast<std::size_t>(i)] = argmax_row(logits, i);
    AttackSpec spec = quick_attack(1e-9, 1);
    auto rate = confusing_class_rate(m, test, spec, Rng(7, 7), 16);
    CHECK_FALSE(rate.has_value());
  }
}

TEST_SUITE("eval report io") {
  TEST_CASE("csv and json round out the measured fields") {
    EvalReport r;
    r.config_hash = "abc123";
    r.clean_acc = 84.5;
    r.robust.emplace_back("pgd20", 45.0);
    r.sweep.push_back({Norm::L2, 150.0 / 255.0, 52.5});
    r.mce = 24.0;
    r.corruption_errors.emplace_back("snow", 21.5);
    r.confusing_rate = 77.45;

    const fs::path dir = fs::temp_directory_path() / "conrad_test_report";
    fs::create_directories(dir);
    r.write_csv((dir / "report.csv").string());
    r.write_json((dir / "report.json").string());

    std::ifstream f((dir / "report.csv").string());
    std::stringstream ss;
    ss << f.rdbuf();
    const std::string text = ss.str();
    CHECK(text.find("# config=abc123") != std::string::npos);
    CHECK(text.find("metric,value") != std::string::npos);
    CHECK(text.find("clean_acc,84.5") != std::string::npos);
    CHECK(text.find("pgd20,45") != std::string::npos);
    CHECK(text.find("sweep_l2_150_255,52.5") != std::string::npos);
    CHECK(text.find("confusing_class_rate,77.45") != std::string::npos);
  }
}
