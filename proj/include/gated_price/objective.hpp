#pragma once

// Joint gate/regressor objectives.
//
// Hard forms use the indicator C1 = [score >= 0.5] exactly as written and are
// used for reporting. Soft forms replace C1 by the classifier probability so
// that gradients reach the classifier; the threshold mode's cross-entropy
// labels C2 = [|y - pred| <= epsilon] are treated as constants.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "gated_price/core_types.hpp"
#include "gated_price/error.hpp"

namespace gprice {

inline constexpr double kProbClampLow = 1e-7;
inline constexpr double kProbClampHigh = 1.0 - 1e-7;

inline double clamp_probability(double s) { return std::clamp(s, kProbClampLow, kProbClampHigh); }

/// 0 iff score < 0.5.
inline int indicator_c1(double score) { return score < 0.5 ? 0 : 1; }

/// 0 iff |y - pred| > epsilon.
inline int indicator_c2(double y, double pred, double epsilon) { return std::abs(y - pred) > epsilon ? 0 : 1; }

/// Non-owning view of one batch: classifier scores, regressor outputs, log-price targets.
struct BatchView {
  std::span<const double> scores;
  std::span<const double> preds;
  std::span<const double> targets;

  std::size_t size() const { return targets.size(); }
};

struct SoftLoss {
  double value = 0.0;
  std::vector<double> d_scores;
  std::vector<double> d_preds;
};

struct SampleEval {
  double score = 0.0;
  double pred = 0.0;
  double target = 0.0;
  int c1 = 0;
  int c2 = 0;
};

struct BatchEval {
  std::vector<SampleEval> samples;
  double hard_loss = 0.0;
  double soft_loss = 0.0;
};

namespace detail {

inline void check_batch(const BatchView& b) {
  if (b.size() == 0) fail(ErrorKind::EmptyBatch, "loss of an empty batch");
  if (b.scores.size() != b.size() || b.preds.size() != b.size()) {
    fail(ErrorKind::ShapeMismatch, "scores, predictions and targets differ in length");
  }
}

inline double cross_entropy(double score, int label) {
  const double s = clamp_probability(score);
  return label ? -std::log(s) : -std::log(1.0 - s);
}

/// Gated MSE plus the coverage hinge, with C1 supplied per sample.
template <typename Gate>
double gated_mse_with_hinge(const BatchView& b, const ObjectiveConfig& cfg, Gate gate) {
  const double n = static_cast<double>(b.size());
  double mse = 0.0;
  double coverage = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const double g = gate(i);
    const double e = b.targets[i] - b.preds[i];
    mse += g * e * e;
    coverage += g;
  }
  return mse / n + cfg.beta * std::max(0.0, cfg.delta - coverage / n);
}

}  // namespace detail

/// Literal percentile objective with hard C1.
inline double percentile_loss_hard(const BatchView& b, const ObjectiveConfig& cfg) {
  detail::check_batch(b);
  return detail::gated_mse_with_hinge(b, cfg, [&](std::size_t i) { return double(indicator_c1(b.scores[i])); });
}

/// Literal threshold objective with hard C1 and C2.
inline double threshold_loss_hard(const BatchView& b, const ObjectiveConfig& cfg) {
  detail::check_batch(b);
  double loss = detail::gated_mse_with_hinge(b, cfg, [&](std::size_t i) { return double(indicator_c1(b.scores[i])); });
  double ce = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    ce += detail::cross_entropy(b.scores[i], indicator_c2(b.targets[i], b.preds[i], cfg.epsilon));
  }
  return loss + cfg.gamma * ce / static_cast<double>(b.size());
}

inline double hard_loss(const BatchView& b, const ObjectiveConfig& cfg) {
  return cfg.mode == ObjectiveMode::Percentile ? percentile_loss_hard(b, cfg) : threshold_loss_hard(b, cfg);
}

/// Soft percentile surrogate. With `gate_open` every gate weight is fixed at 1
/// (warm-up stage): the loss is plain MSE and the score gradient vanishes.
inline SoftLoss percentile_loss_soft(const BatchView& b, const ObjectiveConfig& cfg, bool gate_open = false) {
  detail::check_batch(b);
  const std::size_t n = b.size();
  const double nd = static_cast<double>(n);
  SoftLoss out;
  out.d_scores.assign(n, 0.0);
  out.d_preds.assign(n, 0.0);

  double mse = 0.0;
  double coverage = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = gate_open ? 1.0 : b.scores[i];
    const double e = b.targets[i] - b.preds[i];
    mse += s * e * e;
    coverage += s;
    out.d_preds[i] = -2.0 * s * e / nd;
    if (!gate_open) out.d_scores[i] = e * e / nd;
  }
  const double shortfall = cfg.delta - coverage / nd;
  // Subgradient 0 at the kink.
  if (shortfall > 0.0 && !gate_open) {
    for (auto& d : out.d_scores) d -= cfg.beta / nd;
  }
  out.value = mse / nd + cfg.beta * std::max(0.0, shortfall);
  return out;
}

/// Soft threshold surrogate: the percentile surrogate plus gamma-weighted
/// cross-entropy against detached C2 labels. The cross-entropy always uses the
/// real scores, also when `gate_open` is set.
inline SoftLoss threshold_loss_soft(const BatchView& b, const ObjectiveConfig& cfg, bool gate_open = false) {
  SoftLoss out = percentile_loss_soft(b, cfg, gate_open);
  const double nd = static_cast<double>(b.size());
  double ce = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) {
    const int c2 = indicator_c2(b.targets[i], b.preds[i], cfg.epsilon);
    ce += detail::cross_entropy(b.scores[i], c2);
    const double s = clamp_probability(b.scores[i]);
    out.d_scores[i] += cfg.gamma * (s - c2) / (nd * s * (1.0 - s));
  }
  out.value += cfg.gamma * ce / nd;
  return out;
}

inline SoftLoss soft_loss(const BatchView& b, const ObjectiveConfig& cfg, bool gate_open = false) {
  return cfg.mode == ObjectiveMode::Percentile ? percentile_loss_soft(b, cfg, gate_open)
                                               : threshold_loss_soft(b, cfg, gate_open);
}

/// Per-sample indicators plus both loss values for one batch.
inline BatchEval evaluate_batch(const BatchView& b, const ObjectiveConfig& cfg) {
  detail::check_batch(b);
  BatchEval ev;
  ev.samples.reserve(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    ev.samples.push_back({b.scores[i], b.preds[i], b.targets[i], indicator_c1(b.scores[i]),
                          indicator_c2(b.targets[i], b.preds[i], cfg.epsilon)});
  }
  ev.hard_loss = hard_loss(b, cfg);
  ev.soft_loss = soft_loss(b, cfg).value;
  return ev;
}

}  // namespace gprice
