#pragma once

// Two-stage joint training of the gate (classifier) and the price regressor.
//
// Warm-up phases train with every gate weight fixed at 1, so the regressor
// sees all samples; joint phases train the full soft objective. A single Adam
// state per model is carried across all phases.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gated_price/core_types.hpp"
#include "gated_price/data_pipeline.hpp"
#include "gated_price/error.hpp"
#include "gated_price/metrics.hpp"
#include "gated_price/nn.hpp"
#include "gated_price/objective.hpp"

namespace gprice {

enum class Stage { Warmup, Joint };

inline std::string to_string(Stage s) { return s == Stage::Warmup ? "warmup" : "joint"; }

struct Phase {
  Stage stage = Stage::Joint;
  double lr = 5e-4;
  std::size_t epochs = 0;
  friend bool operator==(const Phase&, const Phase&) = default;
};

/// Schedule used in the original large-scale runs: 1700 + 850 warm-up
/// epochs, then 3400 + 1700 joint epochs, batch 4096.
inline std::vector<Phase> reference_schedule() {
  return {{Stage::Warmup, 5e-4, 1700}, {Stage::Warmup, 2e-4, 850}, {Stage::Joint, 5e-4, 3400}, {Stage::Joint, 2e-4, 1700}};
}
inline constexpr std::size_t kReferenceBatchSize = 4096;

/// Same shape at 1/85 of the length, for desk-scale corpora.
inline std::vector<Phase> desk_schedule() {
  return {{Stage::Warmup, 5e-4, 20}, {Stage::Warmup, 2e-4, 10}, {Stage::Joint, 5e-4, 40}, {Stage::Joint, 2e-4, 20}};
}

struct TrainConfig {
  ObjectiveConfig objective;
  std::size_t batch_size = 256;
  std::vector<Phase> schedule = desk_schedule();
  std::uint64_t seed = 1;
  bool standardize = true;
  std::vector<int> hidden_dims{64, 32};

  std::size_t total_epochs() const {
    std::size_t n = 0;
    for (const auto& p : schedule) n += p.epochs;
    return n;
  }
};

/// The same epoch budget with every phase joint.
inline std::vector<Phase> without_warmup(std::vector<Phase> schedule) {
  for (auto& p : schedule) p.stage = Stage::Joint;
  return schedule;
}

struct EpochPlan {
  std::size_t epoch = 0;
  Stage stage = Stage::Joint;
  double lr = 0.0;
};

inline void validate(const TrainConfig& cfg) {
  cfg.objective.validate();
  if (cfg.batch_size == 0) fail(ErrorKind::BadConfig, "batch_size must be >= 1");
  if (cfg.schedule.empty()) fail(ErrorKind::BadSchedule, "schedule has no phases");
  for (const auto& p : cfg.schedule) {
    if (!(p.lr > 0.0) || !std::isfinite(p.lr)) fail(ErrorKind::BadSchedule, "every phase needs a positive learning rate");
  }
  for (int d : cfg.hidden_dims) {
    if (d <= 0) fail(ErrorKind::BadDims, "hidden dims must be positive");
  }
}

inline std::vector<EpochPlan> make_schedule(const TrainConfig& cfg) {
  if (cfg.schedule.empty()) fail(ErrorKind::BadSchedule, "schedule has no phases");
  std::vector<EpochPlan> plan;
  std::size_t epoch = 0;
  bool joint_seen = false;
  for (const auto& p : cfg.schedule) {
    if (!(p.lr > 0.0)) fail(ErrorKind::BadSchedule, "every phase needs a positive learning rate");
    if (p.stage == Stage::Warmup && joint_seen) fail(ErrorKind::BadSchedule, "warm-up phases must come before joint phases");
    joint_seen = joint_seen || p.stage == Stage::Joint;
    for (std::size_t k = 0; k < p.epochs; ++k) plan.push_back({epoch++, p.stage, p.lr});
  }
  return plan;
}

/// Per-feature affine map fit on training inputs.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> std;

  static Standardizer identity(std::size_t dim) { return {std::vector<double>(dim, 0.0), std::vector<double>(dim, 1.0)}; }

  static Standardizer fit(const std::vector<ListingExample>& examples) {
    const std::size_t dim = examples.front().input.size();
    Standardizer s{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
    const double n = static_cast<double>(examples.size());
    for (const auto& e : examples) {
      for (std::size_t j = 0; j < dim; ++j) s.mean[j] += e.input[j];
    }
    for (auto& m : s.mean) m /= n;
    for (const auto& e : examples) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = e.input[j] - s.mean[j];
        s.std[j] += d * d;
      }
    }
    for (auto& v : s.std) {
      v = std::sqrt(v / n);
      if (!(v > 1e-12)) v = 1.0;
    }
    return s;
  }

  void apply(std::span<const double> x, double* out) const {
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / std[j];
  }
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

struct Checkpoint {
  MlpModel classifier;
  MlpModel regressor;
  nn::AdamState classifier_adam;
  nn::AdamState regressor_adam;
  Standardizer standardizer;
  TrainConfig config;
  StatIndex stats;
  std::size_t visual_dim = 0;
  std::uint32_t format_version = kCheckpointFormatVersion;
  /// CRC of the serialized file, known once saved or loaded.
  std::optional<std::uint32_t> crc;

  std::size_t input_dim() const { return visual_dim + kStatDim; }
};

/// Standardized inputs of a set of examples as an (input_dim x n) matrix.
inline nn::Matrix input_matrix(const Checkpoint& c, std::span<const ListingExample> examples) {
  nn::Matrix X(static_cast<Eigen::Index>(c.input_dim()), static_cast<Eigen::Index>(examples.size()));
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (examples[i].input.size() != c.input_dim()) {
      fail(ErrorKind::DimensionMismatch, "example '" + examples[i].item_id + "' has input dim " +
                                             std::to_string(examples[i].input.size()) + ", checkpoint expects " +
                                             std::to_string(c.input_dim()));
    }
    c.standardizer.apply(examples[i].input, X.col(static_cast<Eigen::Index>(i)).data());
  }
  return X;
}

struct ModelOutputs {
  std::vector<double> scores;
  std::vector<double> log_preds;
  std::vector<double> targets;
};

inline ModelOutputs run_models(const Checkpoint& c, std::span<const ListingExample> examples) {
  ModelOutputs out;
  if (examples.empty()) return out;
  const nn::Matrix X = input_matrix(c, examples);
  const auto s = nn::forward_batch(c.classifier, X).output;
  const auto p = nn::forward_batch(c.regressor, X).output;
  out.scores.assign(s.data(), s.data() + s.size());
  out.log_preds.assign(p.data(), p.data() + p.size());
  out.targets.reserve(examples.size());
  for (const auto& e : examples) out.targets.push_back(e.log_price);
  return out;
}

struct EpochLog {
  std::size_t epoch = 0;
  Stage stage = Stage::Joint;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<GateReport> val_report;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  /// Largest gap between the gate-open surrogate and an independent MSE over
  /// all warm-up batches (percentile mode only).
  double warmup_mse_max_gap = 0.0;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

inline void check_examples(const std::vector<ListingExample>& examples, std::size_t dim, const char* which) {
  for (const auto& e : examples) {
    if (e.input.size() != dim) {
      fail(ErrorKind::DimensionMismatch, std::string(which) + " example '" + e.item_id + "' has input dim " +
                                             std::to_string(e.input.size()) + ", expected " + std::to_string(dim));
    }
  }
}

inline double plain_mse(std::span<const double> y, std::span<const double> pred) {
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += (y[i] - pred[i]) * (y[i] - pred[i]);
  return sum / static_cast<double>(y.size());
}

}  // namespace detail

/// Batch order of one epoch; depends on the run seed and epoch index only.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(detail::mix_seed(seed, 0x100000000ull + epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

/// Fresh checkpoint for the given training data: initialized models, Adam
/// states and standardization, no updates applied yet.
inline Checkpoint init_checkpoint(const std::vector<ListingExample>& train, const TrainConfig& cfg,
                                  const StatIndex& stats) {
  validate(cfg);
  if (train.empty()) fail(ErrorKind::EmptyData, "no training examples");
  const std::size_t dim = train.front().input.size();
  if (dim < kStatDim) fail(ErrorKind::DimensionMismatch, "inputs shorter than the statistics block");
  detail::check_examples(train, dim, "training");

  Checkpoint c;
  c.config = cfg;
  c.stats = stats;
  c.visual_dim = dim - kStatDim;
  c.standardizer = cfg.standardize ? Standardizer::fit(train) : Standardizer::identity(dim);
  std::vector<int> dims{static_cast<int>(dim)};
  dims.insert(dims.end(), cfg.hidden_dims.begin(), cfg.hidden_dims.end());
  dims.push_back(1);
  c.classifier = nn::mlp_init(dims, Role::Classifier, detail::mix_seed(cfg.seed, 1));
  c.regressor = nn::mlp_init(dims, Role::Regressor, detail::mix_seed(cfg.seed, 2));
  const double lr0 = cfg.schedule.empty() ? 5e-4 : cfg.schedule.front().lr;
  c.classifier_adam = nn::AdamState::for_model(c.classifier, lr0);
  c.regressor_adam = nn::AdamState::for_model(c.regressor, lr0);
  return c;
}

/// Hard-indicator loss and gate report of a checkpoint over a set of examples.
inline std::pair<double, GateReport> evaluate_checkpoint(const Checkpoint& c, std::span<const ListingExample> examples) {
  const auto out = run_models(c, examples);
  const BatchView view{out.scores, out.log_preds, out.targets};
  return {hard_loss(view, c.config.objective), gate_report_from_scores(out.scores, out.log_preds, out.targets)};
}

/// Runs the configured schedule. Validation metrics are logged when
/// `validation` is nonempty.
inline TrainResult train(const std::vector<ListingExample>& train_set, const std::vector<ListingExample>& validation,
                         const TrainConfig& cfg, const StatIndex& stats = {}) {
  TrainResult result;
  result.checkpoint = init_checkpoint(train_set, cfg, stats);
  Checkpoint& c = result.checkpoint;
  detail::check_examples(validation, c.input_dim(), "validation");
  const auto plan = make_schedule(cfg);

  const std::size_t n = train_set.size();
  const nn::Matrix X_all = input_matrix(c, train_set);
  std::vector<double> y_all(n);
  for (std::size_t i = 0; i < n; ++i) y_all[i] = train_set[i].log_price;

  const auto dim = static_cast<Eigen::Index>(c.input_dim());
  nn::Matrix X;
  std::vector<double> y;
  nn::RowVector d_scores;
  nn::RowVector d_preds;

  for (const auto& ep : plan) {
    c.classifier_adam.lr = ep.lr;
    c.regressor_adam.lr = ep.lr;
    const bool gate_open = ep.stage == Stage::Warmup;
    const auto order = epoch_order(n, cfg.seed, ep.epoch);
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, n - start);
      X.resize(dim, static_cast<Eigen::Index>(b));
      y.resize(b);
      for (std::size_t k = 0; k < b; ++k) {
        X.col(static_cast<Eigen::Index>(k)) = X_all.col(static_cast<Eigen::Index>(order[start + k]));
        y[k] = y_all[order[start + k]];
      }
      const auto cls = nn::forward_batch(c.classifier, X);
      const auto reg = nn::forward_batch(c.regressor, X);
      const std::span<const double> scores(cls.output.data(), b);
      const std::span<const double> preds(reg.output.data(), b);
      const auto loss = soft_loss(BatchView{scores, preds, y}, cfg.objective, gate_open);
      if (!std::isfinite(loss.value)) {
        fail(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(ep.epoch) + ", batch starting at " +
                                           std::to_string(start) + ": loss " + std::to_string(loss.value));
      }
      if (gate_open && cfg.objective.mode == ObjectiveMode::Percentile) {
        const double mse = detail::plain_mse(y, preds);
        result.warmup_mse_max_gap = std::max(result.warmup_mse_max_gap, std::abs(mse - loss.value));
      }
      loss_sum += loss.value * static_cast<double>(b);

      d_scores = Eigen::Map<const nn::RowVector>(loss.d_scores.data(), static_cast<Eigen::Index>(b));
      d_preds = Eigen::Map<const nn::RowVector>(loss.d_preds.data(), static_cast<Eigen::Index>(b));
      const auto g_cls = nn::backward(c.classifier, cls, d_scores);
      const auto g_reg = nn::backward(c.regressor, reg, d_preds);
      nn::adam_step(c.classifier, g_cls, c.classifier_adam);
      nn::adam_step(c.regressor, g_reg, c.regressor_adam);
    }

    EpochLog entry;
    entry.epoch = ep.epoch;
    entry.stage = ep.stage;
    entry.lr = ep.lr;
    entry.train_loss = loss_sum / static_cast<double>(n);
    if (!validation.empty()) {
      auto [vl, report] = evaluate_checkpoint(c, validation);
      if (!std::isfinite(vl)) {
        fail(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(ep.epoch) + ": validation loss is not finite");
      }
      entry.val_loss = vl;
      entry.val_report = report;
    }
    result.log.push_back(entry);
  }
  return result;
}

/// Ablation arm: identical budget, gate active from the first epoch.
inline TrainResult train_no_warmup(const std::vector<ListingExample>& train_set,
                                   const std::vector<ListingExample>& validation, TrainConfig cfg,
                                   const StatIndex& stats = {}) {
  cfg.schedule = without_warmup(std::move(cfg.schedule));
  return train(train_set, validation, cfg, stats);
}

// ---------------------------------------------------------------------------
// Epoch log CSV

inline std::string epoch_log_header() { return "epoch,stage,lr,train_loss,val_loss,val_positive_fraction,val_male,val_rmsle"; }

inline std::string serialize_epoch_log(const std::vector<EpochLog>& log) {
  auto opt = [](const std::optional<double>& v) { return v ? text::format_shortest(*v) : std::string(); };
  std::string out = "# adam moments carried across stages\n" + epoch_log_header() + "\n";
  for (const auto& e : log) {
    out += std::to_string(e.epoch) + "," + to_string(e.stage) + "," + text::format_shortest(e.lr) + "," +
           text::format_shortest(e.train_loss) + "," + opt(e.val_loss) + ",";
    if (e.val_report) {
      out += text::format_shortest(e.val_report->positive_fraction) + "," + opt(e.val_report->male) + "," +
             opt(e.val_report->rmsle);
    } else {
      out += ",,";
    }
    out += "\n";
  }
  return out;
}

}  // namespace gprice
