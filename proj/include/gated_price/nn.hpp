#pragma once

// Dense feed-forward network: initialization, batched forward pass,
// reverse-mode gradients, Adam updates and finite-difference checking.
//
// Batches are column-major: an input batch is (input_dim x batch_size) and the
// network output is a row vector with one entry per column.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gated_price/core_types.hpp"
#include "gated_price/error.hpp"

namespace gprice::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

inline void validate_dims(const std::vector<int>& dims) {
  if (dims.size() < 2) fail(ErrorKind::BadDims, "an MLP needs at least input and output dims");
  for (int d : dims) {
    if (d <= 0) fail(ErrorKind::BadDims, "layer dims must be positive");
  }
  if (dims.back() != 1) fail(ErrorKind::BadDims, "the output layer must have dimension 1");
}

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases.
inline MlpModel mlp_init(const std::vector<int>& layer_dims, Role role, std::uint64_t seed) {
  validate_dims(layer_dims);
  MlpModel m;
  m.layer_dims = layer_dims;
  m.role = role;
  m.hidden_activation = Activation::Relu;
  m.output_activation = role == Role::Classifier ? Activation::Sigmoid : Activation::Identity;
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    const int fan_in = layer_dims[l];
    const int fan_out = layer_dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = dist(rng);
    }
    m.weights.push_back(std::move(w));
    m.biases.push_back(Vector::Zero(fan_out));
  }
  return m;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct ForwardCache {
  const MlpModel* model = nullptr;
  std::uint64_t generation = 0;
  /// inputs[l] feeds layer l; inputs[0] is the batch itself.
  std::vector<Matrix> inputs;
  /// Pre-activations of every layer.
  std::vector<Matrix> pre_activations;
  RowVector output;

  Eigen::Index batch_size() const { return output.size(); }
};

inline ForwardCache forward_batch(const MlpModel& m, const Matrix& batch) {
  if (batch.rows() != m.input_dim()) {
    fail(ErrorKind::DimensionMismatch, "input has " + std::to_string(batch.rows()) + " features, model expects " +
                                           std::to_string(m.input_dim()));
  }
  ForwardCache cache;
  cache.model = &m;
  cache.generation = m.generation;
  cache.inputs.reserve(m.num_layers());
  cache.pre_activations.reserve(m.num_layers());
  Matrix a = batch;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    Matrix z = m.weights[l] * a;
    z.colwise() += m.biases[l];
    cache.inputs.push_back(std::move(a));
    if (l + 1 < m.num_layers()) {
      a = z.cwiseMax(0.0);
    } else if (m.output_activation == Activation::Sigmoid) {
      a = z.unaryExpr([](double v) { return sigmoid(v); });
    } else {
      a = z;
    }
    cache.pre_activations.push_back(std::move(z));
  }
  cache.output = a.row(0);
  return cache;
}

inline ForwardCache forward(const MlpModel& m, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(m.input_dim())) {
    fail(ErrorKind::DimensionMismatch, "input has " + std::to_string(x.size()) + " features, model expects " +
                                           std::to_string(m.input_dim()));
  }
  const Matrix col = Eigen::Map<const Matrix>(x.data(), static_cast<Eigen::Index>(x.size()), 1);
  return forward_batch(m, col);
}

/// Network output for one input, without keeping the cache.
inline double predict(const MlpModel& m, std::span<const double> x) { return forward(m, x).output(0); }

struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static Gradients zeros_like(const MlpModel& m) {
    Gradients g;
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      g.weights.push_back(Matrix::Zero(m.weights[l].rows(), m.weights[l].cols()));
      g.biases.push_back(Vector::Zero(m.biases[l].size()));
    }
    return g;
  }

  bool congruent_with(const MlpModel& m) const {
    if (weights.size() != m.num_layers() || biases.size() != m.num_layers()) return false;
    for (std::size_t l = 0; l < m.num_layers(); ++l) {
      if (weights[l].rows() != m.weights[l].rows() || weights[l].cols() != m.weights[l].cols()) return false;
      if (biases[l].size() != m.biases[l].size()) return false;
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& w : weights) {
      if (!w.allFinite()) return false;
    }
    for (const auto& b : biases) {
      if (!b.allFinite()) return false;
    }
    return true;
  }
};

/// Gradients of sum_j loss_j w.r.t. every parameter, given d loss_j / d output_j.
inline Gradients backward(const MlpModel& m, const ForwardCache& cache, const RowVector& d_output) {
  if (cache.model != &m || cache.generation != m.generation || cache.inputs.size() != m.num_layers()) {
    fail(ErrorKind::StaleCache, "forward cache does not belong to the current model parameters");
  }
  if (d_output.size() != cache.batch_size()) {
    fail(ErrorKind::ShapeMismatch, "output gradient length does not match the batch");
  }
  Gradients g;
  g.weights.resize(m.num_layers());
  g.biases.resize(m.num_layers());

  const std::size_t last = m.num_layers() - 1;
  Matrix delta = d_output;
  if (m.output_activation == Activation::Sigmoid) {
    delta.array() *= cache.output.array() * (1.0 - cache.output.array());
  }
  for (std::size_t l = last + 1; l-- > 0;) {
    g.weights[l].noalias() = delta * cache.inputs[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix upstream = m.weights[l].transpose() * delta;
      delta = upstream.cwiseProduct(
          cache.pre_activations[l - 1].unaryExpr([](double z) { return z > 0.0 ? 1.0 : 0.0; }));
    }
  }
  return g;
}

inline Gradients backward(const MlpModel& m, const ForwardCache& cache, double d_output) {
  return backward(m, cache, RowVector::Constant(cache.batch_size(), d_output));
}

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  Gradients m;
  Gradients v;

  static AdamState for_model(const MlpModel& model, double lr) {
    if (!(lr > 0.0)) fail(ErrorKind::BadConfig, "learning rate must be positive");
    AdamState s;
    s.lr = lr;
    s.m = Gradients::zeros_like(model);
    s.v = Gradients::zeros_like(model);
    return s;
  }
};

namespace detail {

template <typename Param, typename Grad>
void adam_update(Param& theta, const Grad& g, Param& m, Param& v, const AdamState& s, double c1, double c2) {
  m = s.beta1 * m + (1.0 - s.beta1) * g;
  v = s.beta2 * v + (1.0 - s.beta2) * g.cwiseProduct(g);
  theta.array() -= s.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + s.eps);
}

}  // namespace detail

/// One bias-corrected Adam update; increments the step count and the model generation.
inline void adam_step(MlpModel& model, const Gradients& g, AdamState& s) {
  if (!g.congruent_with(model) || !s.m.congruent_with(model) || !s.v.congruent_with(model)) {
    fail(ErrorKind::ShapeMismatch, "gradient or optimizer state does not match the model");
  }
  s.t += 1;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
  for (std::size_t l = 0; l < model.num_layers(); ++l) {
    detail::adam_update(model.weights[l], g.weights[l], s.m.weights[l], s.v.weights[l], s, c1, c2);
    detail::adam_update(model.biases[l], g.biases[l], s.m.biases[l], s.v.biases[l], s, c1, c2);
  }
  model.generation += 1;
}

// ---------------------------------------------------------------------------
// Parameter traversal and gradient checking

/// Visits every scalar parameter in checkpoint order: all weight matrices
/// (row-major, layer by layer), then all bias vectors.
template <typename Model, typename Fn>
void for_each_parameter(Model& m, Fn&& fn) {
  for (std::size_t l = 0; l < m.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < m.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < m.weights[l].cols(); ++c) fn(m.weights[l](r, c));
    }
  }
  for (std::size_t l = 0; l < m.biases.size(); ++l) {
    for (Eigen::Index r = 0; r < m.biases[l].size(); ++r) fn(m.biases[l](r));
  }
}

inline std::vector<double> flatten_gradients(const Gradients& g) {
  std::vector<double> out;
  for_each_parameter(g, [&](double v) { out.push_back(v); });
  return out;
}

/// Scalar loss of the network output with its derivative.
struct ScalarLoss {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

using AnalyticGradient = std::function<Gradients(const MlpModel&, const ForwardCache&, double)>;

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t parameters_checked = 0;
  /// Smallest |pre-activation| over hidden units; values near 0 mean the
  /// central difference may straddle a ReLU kink.
  double min_hidden_margin = std::numeric_limits<double>::infinity();
  bool passed = false;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
  return std::abs(analytic - numeric) / denom;
}

inline double hidden_margin(const ForwardCache& cache) {
  double margin = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l + 1 < cache.pre_activations.size(); ++l) {
    margin = std::min(margin, cache.pre_activations[l].cwiseAbs().minCoeff());
  }
  return margin;
}

/// Compares analytic parameter gradients against central differences with step h.
inline GradCheckReport grad_check(const MlpModel& model, const ScalarLoss& loss, std::span<const double> x,
                                  double tolerance, double h = 1e-5, AnalyticGradient analytic = {}) {
  if (!analytic) {
    analytic = [](const MlpModel& m, const ForwardCache& c, double d) { return backward(m, c, d); };
  }
  GradCheckReport report;
  const auto cache = forward(model, x);
  report.min_hidden_margin = hidden_margin(cache);
  const auto g = flatten_gradients(analytic(model, cache, loss.derivative(cache.output(0))));

  MlpModel probe = model;
  std::size_t k = 0;
  for_each_parameter(probe, [&](double& theta) {
    const double saved = theta;
    theta = saved + h;
    const double up = loss.value(predict(probe, x));
    theta = saved - h;
    const double down = loss.value(predict(probe, x));
    theta = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = relative_error(g[k], numeric);
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_index = k;
    }
    report.max_absolute_error = std::max(report.max_absolute_error, std::abs(g[k] - numeric));
    ++k;
  });
  report.parameters_checked = k;
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace gprice::nn
