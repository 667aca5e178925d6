#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "gated_price/core_types.hpp"
#include "gated_price/error.hpp"
#include "gated_price/objective.hpp"

namespace gprice {

namespace detail {

inline void check_prices(std::span<const double> pred, std::span<const double> sold) {
  if (pred.empty()) fail(ErrorKind::EmptyInput, "metric over an empty set");
  if (pred.size() != sold.size()) fail(ErrorKind::ShapeMismatch, "prediction and truth lengths differ");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!(pred[i] > 0.0) || !(sold[i] > 0.0)) fail(ErrorKind::NonPositivePrice, "metrics need positive prices");
  }
}

}  // namespace detail

/// Mean absolute log error over price pairs.
inline double male(std::span<const double> pred_prices, std::span<const double> sold_prices) {
  detail::check_prices(pred_prices, sold_prices);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred_prices.size(); ++i) sum += std::abs(std::log(pred_prices[i]) - std::log(sold_prices[i]));
  return sum / static_cast<double>(pred_prices.size());
}

/// Root mean square log error over price pairs.
inline double rmsle(std::span<const double> pred_prices, std::span<const double> sold_prices) {
  detail::check_prices(pred_prices, sold_prices);
  double sum = 0.0;
  for (std::size_t i = 0; i < pred_prices.size(); ++i) {
    const double d = std::log(pred_prices[i]) - std::log(sold_prices[i]);
    sum += d * d;
  }
  return std::sqrt(sum / static_cast<double>(pred_prices.size()));
}

/// Gate outcome from raw scores and log-space predictions/targets. Metrics
/// cover the hard-C1 positives only and are absent when there are none.
inline GateReport gate_report_from_scores(std::span<const double> scores, std::span<const double> log_preds,
                                          std::span<const double> log_targets) {
  if (scores.empty()) fail(ErrorKind::EmptyInput, "gate report over an empty set");
  if (scores.size() != log_preds.size() || scores.size() != log_targets.size()) {
    fail(ErrorKind::ShapeMismatch, "gate report inputs differ in length");
  }
  GateReport r;
  r.n_total = scores.size();
  std::vector<double> pred_prices;
  std::vector<double> sold_prices;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (indicator_c1(scores[i]) == 1) {
      pred_prices.push_back(std::exp(log_preds[i]));
      sold_prices.push_back(std::exp(log_targets[i]));
    }
  }
  r.n_positive = pred_prices.size();
  r.positive_fraction = static_cast<double>(r.n_positive) / static_cast<double>(r.n_total);
  if (r.n_positive > 0) {
    r.male = male(pred_prices, sold_prices);
    r.rmsle = rmsle(pred_prices, sold_prices);
  }
  return r;
}

}  // namespace gprice
