#include "conrad/train.hpp"

#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "conrad/eval.hpp"

namespace fs = std::filesystem;

namespace conrad {

namespace {

// rng stream ids; every draw in a run derives from (seed, stream, epoch, ...)
constexpr std::uint64_t kStreamInit = 1;
constexpr std::uint64_t kStreamData = 2;
constexpr std::uint64_t kStreamStep = 3;
constexpr std::uint64_t kStreamEval = 4;
constexpr std::uint64_t kStreamFraction = 5;

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train.epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (lr <= 0) throw std::invalid_argument("train.lr must be > 0");
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw std::invalid_argument("data.fraction must be in (0,1]");
  if (epochs > 0 && milestone(1) >= milestone(2))
    throw std::invalid_argument("train milestones must be strictly increasing");
  loss.validate();
  attack.validate();
  if (attack.loss_kind != loss.required_attack_loss())
    throw std::invalid_argument(
        "attack loss kind does not match the training method (CE for AT/MART, "
        "kl_to_reference for TRADES)");
}

int TrainConfig::milestone(int which) const {
  const int configured = which == 1 ? milestone1 : milestone2;
  if (configured > 0) return configured;
  const int m1 = static_cast<int>(std::ceil(0.5 * epochs));
  if (which == 1) return m1;
  // derived milestones stay strictly increasing even for tiny budgets
  return std::max(m1 + 1, static_cast<int>(std::ceil(0.75 * epochs)));
}

double TrainConfig::lr_at_epoch(int epoch) const {
  double v = lr;
  if (epoch >= milestone(1)) v *= 0.1;
  if (epoch >= milestone(2)) v *= 0.1;
  return v;
}

TrainConfig halve_epoch_budget(TrainConfig config) {
  const bool custom1 = config.milestone1 > 0, custom2 = config.milestone2 > 0;
  config.epochs /= 2;
  if (custom1) config.milestone1 = (config.milestone1 + 1) / 2;
  if (custom2) config.milestone2 = (config.milestone2 + 1) / 2;
  return config;
}

LossBreakdown train_step(TrainState& state, const LabeledBatch& batch, const TrainConfig& config,
                         double lr, Rng step_rng, const std::string& config_hash) {
  config.loss.validate();
  if (config.attack.loss_kind != config.loss.required_attack_loss())
    throw std::invalid_argument("attack loss kind does not match the training method");

  const std::int64_t n = batch.count();
  auto [t1, t2] = sample_pair(config.policy, step_rng.split(0), n);
  auto [r1, r2] = attack_pair(state.model, batch, t1, t2, config.attack, step_rng.split(1),
                              BnMode::Frozen);

  BranchBatch b1{t1(batch.images).data, r1.adversarial.data};
  BranchBatch b2{t2(batch.images).data, r2.adversarial.data};

  Tensor base_adv;
  if (config.loss.regularizer == Regularizer::AugmixCr) {
    const Transform tb =
        sample_transform(AugmentPolicy::named(PolicyName::Base), step_rng.split(2), n);
    LabeledBatch base_batch;
    base_batch.images = tb(batch.images);
    base_batch.labels = batch.labels;
    state.model.capture_frozen_stats(base_batch.images.data);
    ProbBatch ref;
    const bool needs_ref = config.attack.loss_kind == LossKind::KlToReference;
    if (needs_ref)
      ref = softmax_temperature(state.model.forward(base_batch.images.data, BnMode::Frozen), 1.0);
    base_adv = pgd(state.model, base_batch, config.attack, needs_ref ? &ref : nullptr,
                   step_rng.split(3), BnMode::Frozen)
                   .adversarial.data;
  }

  Tape tape;
  BoundModel bound(tape, state.model, /*params_require_grad=*/true);
  const TotalLoss loss = total_loss_graph(tape, bound, batch.labels, b1, b2,
                                          base_adv.empty() ? nullptr : &base_adv, config.loss,
                                          BnMode::Train);
  if (!std::isfinite(loss.values.total)) {
    std::ostringstream os;
    os << "non-finite training loss (config=" << config_hash << ", epoch=" << state.epoch
       << ", total=" << loss.values.total << ", adv=" << loss.values.adv
       << ", consistency=" << loss.values.consistency << ", clean_ce=" << loss.values.clean_ce
       << ", robust_kl=" << loss.values.robust_kl << ")";
    throw std::runtime_error(os.str());
  }
  tape.backward(loss.node);

  auto params = state.model.parameters();
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) grads.push_back(bound.param_gradient(i));

  state.optimizer.momentum = static_cast<float>(config.momentum);
  state.optimizer.weight_decay = static_cast<float>(config.weight_decay);
  state.optimizer.step(params, grads, static_cast<float>(lr));
  return loss.values;
}

RunResult run_training(const TrainConfig& config, const DatasetSplit& data,
                       const std::string& out_dir, const std::string& config_hash,
                       std::ostream* log) {
  config.validate();
  fs::create_directories(out_dir);
  const std::string metrics_path = (fs::path(out_dir) / "metrics.csv").string();
  const std::string last_path = (fs::path(out_dir) / "last.ckpt").string();
  const std::string best_path = (fs::path(out_dir) / "best.ckpt").string();

  const DatasetSplit working =
      config.fraction < 1.0
          ? stratified_fraction(data, config.fraction, Rng(config.seed, kStreamFraction))
          : data;
  const LabeledBatch eval_set =
      config.eval_subset > 0 && config.eval_subset < working.test.count()
          ? slice_batch(working.test, 0, config.eval_subset)
          : working.test;

  TrainState state;
  if (fs::exists(last_path)) {
    LoadedCheckpoint lc = load_checkpoint(last_path);
    if (!config_hash.empty() && !lc.meta.config_hash.empty() && lc.meta.config_hash != config_hash)
      throw std::runtime_error("refusing to resume: checkpoint in " + out_dir +
                               " was written by config " + lc.meta.config_hash);
    state.model = std::move(lc.model);
    state.optimizer.buffers = std::move(lc.momentum_buffers);
    state.epoch = lc.meta.epoch;
    state.best_pgd10 = lc.meta.best_pgd10;
    state.history = metrics_read(metrics_path);
    if (log) (*log) << "resuming from epoch " << state.epoch << "\n";
  } else {
    state.model = Classifier::make(config.arch, config.num_classes, config.input_shape,
                                   Rng(config.seed, kStreamInit));
    metrics_create(metrics_path, config_hash);
  }

  AttackSpec eval_attack = attack_preset("pgd10_train");
  eval_attack.threat.p = config.attack.threat.p;
  eval_attack.threat.epsilon = config.attack.threat.epsilon;
  eval_attack.threat.step_size = config.attack.threat.step_size;
  eval_attack.loss_kind = LossKind::CrossEntropy;
  eval_attack.threat.random_start = false;

  auto save_state = [&](const std::string& path, const MetricsRow* row) {
    CheckpointMeta meta;
    meta.config_hash = config_hash;
    meta.arch = arch_name(config.arch);
    meta.num_classes = config.num_classes;
    meta.input_shape = config.input_shape;
    meta.epoch = state.epoch;
    meta.seed = config.seed;
    meta.best_pgd10 = state.best_pgd10;
    if (row != nullptr) {
      meta.clean_acc = row->clean_acc;
      meta.pgd10_acc = row->pgd10_acc;
    }
    save_checkpoint(path, state.model, meta, &state.optimizer.buffers);
  };

  if (config.epochs == 0 && !fs::exists(last_path)) save_state(last_path, nullptr);

  const std::int64_t n_train = working.train.count();
  for (int epoch = state.epoch + 1; epoch <= config.epochs; ++epoch) {
    const double lr = config.lr_at_epoch(epoch);
    const auto order =
        epoch_order(n_train, Rng(config.seed, kStreamData).split(static_cast<std::uint64_t>(epoch)));

    double adv_sum = 0.0, cons_sum = 0.0;
    std::int64_t seen = 0;
    const std::int64_t steps = (n_train + config.batch_size - 1) / config.batch_size;
    for (std::int64_t i = 0; i < steps; ++i) {
      LabeledBatch batch = gather_batch(working.train, order, i * config.batch_size,
                                        config.batch_size);
      Rng step_rng = Rng(config.seed, kStreamStep)
                         .split(static_cast<std::uint64_t>(epoch))
                         .split(static_cast<std::uint64_t>(i));
      const LossBreakdown b = train_step(state, batch, config, lr, step_rng, config_hash);
      adv_sum += b.adv * static_cast<double>(batch.count());
      cons_sum += b.consistency * static_cast<double>(batch.count());
      seen += batch.count();
    }
    state.epoch = epoch;

    MetricsRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_adv_loss = adv_sum / static_cast<double>(seen);
    row.train_cons_loss = cons_sum / static_cast<double>(seen);
    row.clean_acc = clean_accuracy(state.model, eval_set, config.batch_size);
    row.pgd10_acc = robust_accuracy(state.model, eval_set, eval_attack,
                                    Rng(config.seed, kStreamEval).split(static_cast<std::uint64_t>(epoch)),
                                    config.batch_size);
    metrics_append(metrics_path, row);
    state.history.push_back(row);
    if (log)
      (*log) << "epoch " << epoch << " lr " << lr << " adv " << row.train_adv_loss << " cons "
             << row.train_cons_loss << " clean " << row.clean_acc << "% pgd10 " << row.pgd10_acc
             << "%\n";

    if (row.pgd10_acc > state.best_pgd10) {
      state.best_pgd10 = row.pgd10_acc;
      save_state(best_path, &row);
    }
    save_state(last_path, &row);
  }

  RunResult out;
  out.history = state.history;
  out.last_path = last_path;
  out.best_path = fs::exists(best_path) ? best_path : last_path;
  out.best_pgd10 = state.best_pgd10;
  return out;
}

}  // namespace conrad
