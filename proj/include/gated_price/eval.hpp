#pragma once

// Evaluation of trained checkpoints: gate reports, constraint sweeps, gate
// efficacy against ground-truth flags and the warm-up ablation.

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gated_price/core_types.hpp"
#include "gated_price/data_pipeline.hpp"
#include "gated_price/error.hpp"
#include "gated_price/metrics.hpp"
#include "gated_price/synth.hpp"
#include "gated_price/text_io.hpp"
#include "gated_price/trainer.hpp"

namespace gprice {

inline GateReport gate_report(const Checkpoint& c, std::span<const ListingExample> examples) {
  if (examples.empty()) fail(ErrorKind::EmptyInput, "gate report over no examples");
  const auto out = run_models(c, examples);
  return gate_report_from_scores(out.scores, out.log_preds, out.targets);
}

/// The regressor's report with the gate forced open on every item.
inline GateReport ungated_report(const Checkpoint& c, std::span<const ListingExample> examples) {
  if (examples.empty()) fail(ErrorKind::EmptyInput, "report over no examples");
  const auto out = run_models(c, examples);
  const std::vector<double> open(out.scores.size(), 1.0);
  return gate_report_from_scores(open, out.log_preds, out.targets);
}

/// Rank-based ROC area (ties get averaged ranks).
inline double roc_auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) fail(ErrorKind::ShapeMismatch, "scores and flags differ in length");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (bool p : positive) n_pos += p ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) fail(ErrorKind::DegenerateTruth, "AUC needs both classes");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (positive[order[k]]) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

/// ROC area of the classifier scores against ground-truth qualified flags,
/// matched by item id.
inline double gate_auc(const Checkpoint& c, std::span<const ListingExample> examples, const std::vector<TruthRow>& truth) {
  std::map<std::string, bool> flags;
  for (const auto& t : truth) flags[t.item_id] = t.qualified;
  std::vector<ListingExample> matched;
  std::vector<bool> labels;
  for (const auto& e : examples) {
    const auto it = flags.find(e.item_id);
    if (it == flags.end()) continue;
    matched.push_back(e);
    labels.push_back(it->second);
  }
  if (matched.empty()) fail(ErrorKind::DegenerateTruth, "no example has a ground-truth flag");
  const auto out = run_models(c, matched);
  return roc_auc(out.scores, labels);
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepRow {
  double constraint = 0.0;
  std::size_t n_positive = 0;
  double positive_fraction = 0.0;
  std::optional<double> male;
  std::optional<double> rmsle;
};

inline SweepRow to_sweep_row(double constraint, const GateReport& r) {
  return {constraint, r.n_positive, r.positive_fraction, r.male, r.rmsle};
}

/// Returns a copy of `cfg` with the swept constraint set: delta in percentile
/// mode, epsilon in threshold mode.
inline TrainConfig with_constraint(TrainConfig cfg, double value) {
  if (cfg.objective.mode == ObjectiveMode::Percentile) {
    cfg.objective.delta = value;
  } else {
    cfg.objective.epsilon = value;
  }
  return cfg;
}

/// One full train + test evaluation per constraint value, same seed throughout.
inline std::vector<SweepRow> sweep(const PreparedData& data, const TrainConfig& cfg, const std::vector<double>& values) {
  if (!std::is_sorted(values.begin(), values.end())) fail(ErrorKind::BadConfig, "sweep values must be ascending");
  std::vector<SweepRow> rows;
  for (double v : values) {
    const auto run = train(data.examples.train, data.examples.validation, with_constraint(cfg, v), data.index);
    rows.push_back(to_sweep_row(v, gate_report(run.checkpoint, data.examples.test)));
  }
  return rows;
}

inline std::string sweep_header() { return "constraint,n_positive,positive_fraction,male,rmsle"; }

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  auto opt = [](const std::optional<double>& v) { return v ? text::format_shortest(*v) : std::string(); };
  std::string out = sweep_header() + "\n";
  for (const auto& r : rows) {
    out += text::format_shortest(r.constraint) + "," + std::to_string(r.n_positive) + "," +
           text::format_shortest(r.positive_fraction) + "," + opt(r.male) + "," + opt(r.rmsle) + "\n";
  }
  return out;
}

/// Aligned text with one column per constraint value.
inline std::string sweep_table(const std::vector<SweepRow>& rows, ObjectiveMode mode) {
  auto fmt = [](const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return std::string(buf);
  };
  std::vector<std::vector<std::string>> table;
  std::vector<std::string> head{mode == ObjectiveMode::Percentile ? "percentile" : "epsilon"};
  std::vector<std::string> count{"# positive items"};
  std::vector<std::string> pct{"% positive items"};
  std::vector<std::string> male_row{"MALE"};
  std::vector<std::string> rmsle_row{"RMSLE"};
  for (const auto& r : rows) {
    head.push_back(mode == ObjectiveMode::Percentile ? fmt("%.0f", r.constraint * 100.0) : fmt("%g", r.constraint));
    count.push_back(std::to_string(r.n_positive));
    pct.push_back(fmt("%.2f%%", r.positive_fraction * 100.0));
    male_row.push_back(r.male ? fmt("%.4f", *r.male) : "-");
    rmsle_row.push_back(r.rmsle ? fmt("%.4f", *r.rmsle) : "-");
  }
  table = {head, count, pct, male_row, rmsle_row};
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : table) {
    for (std::size_t j = 0; j < row.size(); ++j) width[j] = std::max(width[j], row[j].size());
  }
  std::string out;
  for (const auto& row : table) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      std::string cell = row[j];
      if (j == 0) {
        cell.append(width[j] - cell.size(), ' ');
      } else {
        cell.insert(0, width[j] - cell.size(), ' ');
      }
      out += (j ? " | " : "") + cell;
    }
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Warm-up ablation

struct AblationResult {
  GateReport with_warmup;
  GateReport without_warmup;
};

inline AblationResult warmup_ablation(const PreparedData& data, const TrainConfig& cfg) {
  AblationResult r;
  const auto w = train(data.examples.train, data.examples.validation, cfg, data.index);
  r.with_warmup = gate_report(w.checkpoint, data.examples.test);
  const auto wo = train_no_warmup(data.examples.train, data.examples.validation, cfg, data.index);
  r.without_warmup = gate_report(wo.checkpoint, data.examples.test);
  return r;
}

}  // namespace gprice
