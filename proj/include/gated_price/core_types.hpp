#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gated_price/error.hpp"

namespace gprice {

inline constexpr int kMinCategory = 1;
inline constexpr int kMaxCategory = 13;
inline constexpr std::size_t kStatDim = 12;

/// Quartiles and mean of a set of log prices.
struct PriceSummary {
  double q1 = 0.0;
  double q2 = 0.0;
  double q3 = 0.0;
  double mean = 0.0;

  bool ordered() const { return q1 <= q2 && q2 <= q3; }
  bool finite() const {
    return std::isfinite(q1) && std::isfinite(q2) && std::isfinite(q3) && std::isfinite(mean);
  }
  friend bool operator==(const PriceSummary&, const PriceSummary&) = default;
};

/// The twelve historical price statistics attached to a listing, in log-price units.
/// Flattened order: global, category, seller; each as q1, q2, q3, mean.
struct StatFeatures {
  PriceSummary global;
  PriceSummary category;
  PriceSummary seller;

  std::array<double, kStatDim> flatten() const {
    return {global.q1,   global.q2,   global.q3,   global.mean,  //
            category.q1, category.q2, category.q3, category.mean,  //
            seller.q1,   seller.q2,   seller.q3,   seller.mean};
  }
  bool valid() const {
    return global.ordered() && category.ordered() && seller.ordered() && global.finite() &&
           category.finite() && seller.finite();
  }
};

struct ListingExample {
  std::string item_id;
  std::string seller_id;
  int category_id = kMinCategory;
  double sold_price = 1.0;
  double log_price = 0.0;
  std::vector<double> visual_features;
  std::vector<double> stat_features;
  /// visual_features followed by stat_features.
  std::vector<double> input;
};

/// Concatenates visual and statistical features in the canonical order.
inline std::vector<double> concat_input(const std::vector<double>& visual,
                                        const std::array<double, kStatDim>& stats) {
  std::vector<double> out;
  out.reserve(visual.size() + kStatDim);
  out.insert(out.end(), visual.begin(), visual.end());
  out.insert(out.end(), stats.begin(), stats.end());
  return out;
}

/// Throws on the first violated ListingExample invariant.
inline void validate_example(const ListingExample& e) {
  if (!(e.sold_price > 0.0) || !std::isfinite(e.sold_price)) {
    fail(ErrorKind::NonPositivePrice,
         "sold_price must be positive, got " + std::to_string(e.sold_price));
  }
  const double expected = std::log(e.sold_price);
  const double tol = 1e-12 * std::max(1.0, std::abs(expected));
  if (!(std::abs(e.log_price - expected) <= tol)) {
    fail(ErrorKind::NonPositivePrice, "log_price does not equal ln(sold_price)");
  }
  if (e.category_id < kMinCategory || e.category_id > kMaxCategory) {
    fail(ErrorKind::BadCategory, "category_id must be in 1..13, got " + std::to_string(e.category_id));
  }
  if (e.stat_features.size() != kStatDim) {
    fail(ErrorKind::DimensionMismatch,
         "stat_features has " + std::to_string(e.stat_features.size()) + " entries, expected 12");
  }
  if (e.input.size() != e.visual_features.size() + kStatDim) {
    fail(ErrorKind::DimensionMismatch, "input length " + std::to_string(e.input.size()) +
                                           " != visual " + std::to_string(e.visual_features.size()) +
                                           " + 12");
  }
  for (std::size_t i = 0; i < e.visual_features.size(); ++i) {
    if (e.input[i] != e.visual_features[i]) {
      fail(ErrorKind::DimensionMismatch, "input does not start with visual_features");
    }
  }
  for (std::size_t i = 0; i < kStatDim; ++i) {
    if (e.input[e.visual_features.size() + i] != e.stat_features[i]) {
      fail(ErrorKind::DimensionMismatch, "input does not end with stat_features");
    }
  }
}

enum class Role { Classifier, Regressor };
enum class Activation { Relu, Sigmoid, Identity };

/// Dense feed-forward network. weights[l] maps layer l (cols) to layer l+1 (rows).
struct MlpModel {
  std::vector<int> layer_dims;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Activation hidden_activation = Activation::Relu;
  Activation output_activation = Activation::Identity;
  Role role = Role::Regressor;
  /// Bumped on every parameter update; forward caches remember it.
  std::uint64_t generation = 0;

  int input_dim() const { return layer_dims.front(); }
  std::size_t num_layers() const { return weights.size(); }
  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }
};

enum class ObjectiveMode { Percentile, Threshold };

inline std::string to_string(ObjectiveMode m) {
  return m == ObjectiveMode::Percentile ? "percentile" : "threshold";
}

struct ObjectiveConfig {
  ObjectiveMode mode = ObjectiveMode::Percentile;
  double delta = 0.5;
  double beta = 1.0;
  double gamma = 1.0;
  double epsilon = 0.5;

  void validate() const {
    if (!(delta > 0.0 && delta <= 1.0)) fail(ErrorKind::BadConfig, "delta must be in (0,1]");
    if (!(beta >= 0.0) || !std::isfinite(beta)) fail(ErrorKind::BadConfig, "beta must be >= 0");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) fail(ErrorKind::BadConfig, "gamma must be >= 0");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) fail(ErrorKind::BadConfig, "epsilon must be > 0");
  }
};

/// Gate outcome over one evaluation set. male/rmsle are absent when nothing passes the gate.
struct GateReport {
  std::size_t n_total = 0;
  std::size_t n_positive = 0;
  double positive_fraction = 0.0;
  std::optional<double> male;
  std::optional<double> rmsle;
};

}  // namespace gprice
