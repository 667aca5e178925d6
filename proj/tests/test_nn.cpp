#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "gated_price/nn.hpp"

using namespace gprice;
using namespace gprice::nn;

namespace {

ScalarLoss squared_loss(double target) {
  return {[target](double o) { return (o - target) * (o - target); },
          [target](double o) { return 2.0 * (o - target); }};
}

std::vector<double> random_input(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n(0, 1);
  std::vector<double> x(dim);
  for (auto& v : x) v = n(rng);
  return x;
}

}  // namespace

TEST(MlpInit, RolesAndShapes) {
  const auto reg = mlp_init({44, 64, 32, 1}, Role::Regressor, 3);
  EXPECT_EQ(reg.output_activation, Activation::Identity);
  EXPECT_EQ(reg.weights[0].rows(), 64);
  EXPECT_EQ(reg.weights[0].cols(), 44);
  EXPECT_EQ(reg.biases[2].size(), 1);
  const auto cls = mlp_init({44, 64, 32, 1}, Role::Classifier, 3);
  EXPECT_EQ(cls.output_activation, Activation::Sigmoid);
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    auto x = random_input(rng, 44);
    for (auto& v : x) v *= 50.0;
    const double s = predict(cls, x);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
  EXPECT_THROW(mlp_init({44}, Role::Regressor, 1), Error);
  EXPECT_THROW(mlp_init({44, 0, 1}, Role::Regressor, 1), Error);
  EXPECT_THROW(mlp_init({44, 8, 2}, Role::Regressor, 1), Error);
}

TEST(MlpInit, SameSeedSameParameters) {
  const auto a = mlp_init({10, 8, 1}, Role::Regressor, 99);
  const auto b = mlp_init({10, 8, 1}, Role::Regressor, 99);
  const auto c = mlp_init({10, 8, 1}, Role::Regressor, 100);
  for (std::size_t l = 0; l < a.num_layers(); ++l) {
    EXPECT_TRUE(a.weights[l] == b.weights[l]);
    EXPECT_TRUE(a.biases[l] == b.biases[l]);
  }
  EXPECT_FALSE(a.weights[0] == c.weights[0]);
}

TEST(Forward, HandExamples) {
  auto cls = mlp_init({3, 4, 1}, Role::Classifier, 1);
  for (auto& w : cls.weights) w.setZero();
  EXPECT_EQ(predict(cls, std::vector<double>{1, 2, 3}), 0.5);

  auto lin = mlp_init({2, 1}, Role::Regressor, 1);
  lin.weights[0] << 1, 1;
  lin.biases[0] << 0;
  EXPECT_EQ(predict(lin, std::vector<double>{3, 4}), 7.0);

  auto relu = mlp_init({1, 1, 1}, Role::Regressor, 1);
  relu.weights[0] << 1;
  relu.biases[0] << -1;
  relu.weights[1] << 5;
  relu.biases[1] << 0.25;
  EXPECT_EQ(predict(relu, std::vector<double>{0.0}), 0.25);  // pre-activation -1 clipped
  EXPECT_EQ(predict(relu, std::vector<double>{3.0}), 10.25);
  EXPECT_THROW(predict(relu, std::vector<double>{1, 2}), Error);
}

TEST(Forward, BatchMatchesSingle) {
  const auto m = mlp_init({5, 7, 3, 1}, Role::Classifier, 4);
  std::mt19937_64 rng(2);
  Matrix batch(5, 6);
  std::vector<std::vector<double>> cols;
  for (int j = 0; j < 6; ++j) {
    cols.push_back(random_input(rng, 5));
    for (int i = 0; i < 5; ++i) batch(i, j) = cols.back()[static_cast<std::size_t>(i)];
  }
  const auto cache = forward_batch(m, batch);
  for (int j = 0; j < 6; ++j) EXPECT_NEAR(cache.output(j), predict(m, cols[static_cast<std::size_t>(j)]), 1e-15);
}

TEST(Backward, HandExamples) {
  auto lin = mlp_init({2, 1}, Role::Regressor, 1);
  lin.weights[0] << 0.3, -0.2;
  const std::vector<double> x{3, 4};
  const auto cache = forward(lin, x);
  const auto g = backward(lin, cache, 1.0);
  EXPECT_EQ(g.weights[0](0, 0), 3.0);
  EXPECT_EQ(g.weights[0](0, 1), 4.0);
  EXPECT_EQ(g.biases[0](0), 1.0);

  const auto m = mlp_init({4, 6, 1}, Role::Classifier, 2);
  const auto c2 = forward(m, std::vector<double>{1, -1, 2, 0.5});
  for (double v : flatten_gradients(backward(m, c2, 0.0))) EXPECT_EQ(v, 0.0);
}

TEST(Backward, StaleCacheAndShape) {
  auto m = mlp_init({2, 3, 1}, Role::Regressor, 1);
  const auto cache = forward(m, std::vector<double>{1, 2});
  EXPECT_THROW(backward(m, cache, RowVector::Ones(2)), Error);
  auto state = AdamState::for_model(m, 1e-3);
  adam_step(m, backward(m, cache, 1.0), state);
  try {
    backward(m, cache, 1.0);
    FAIL() << "stale cache accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::StaleCache);
  }
}

TEST(Adam, FirstStepHandValue) {
  auto m = mlp_init({1, 1}, Role::Regressor, 1);
  m.weights[0](0, 0) = 0.0;
  m.biases[0](0) = 0.0;
  auto g = Gradients::zeros_like(m);
  g.weights[0](0, 0) = 0.3;
  auto s = AdamState::for_model(m, 0.0005);
  adam_step(m, g, s);
  EXPECT_NEAR(m.weights[0](0, 0), -0.0005 * 0.3 / (std::sqrt(0.09) + 1e-8), 1e-15);
  EXPECT_NEAR(m.weights[0](0, 0), -0.0005, 1e-10);
  EXPECT_EQ(m.biases[0](0), 0.0);
  EXPECT_EQ(s.t, 1u);

  const double before = m.weights[0](0, 0);
  adam_step(m, g, s);
  EXPECT_NEAR(m.weights[0](0, 0) - before, -0.0005, 1e-10);
}

TEST(Adam, ZeroGradientLeavesParameters) {
  auto m = mlp_init({3, 2, 1}, Role::Regressor, 5);
  const auto before = m;
  auto s = AdamState::for_model(m, 0.01);
  adam_step(m, Gradients::zeros_like(m), s);
  EXPECT_EQ(s.t, 1u);
  for (std::size_t l = 0; l < m.num_layers(); ++l) EXPECT_TRUE(m.weights[l] == before.weights[l]);
}

TEST(GradCheck, LinearSquaredLossIsExact) {
  const auto m = mlp_init({4, 1}, Role::Regressor, 3);
  const auto r = grad_check(m, squared_loss(0.7), std::vector<double>{0.5, -1, 2, 0.1}, 1e-8);
  EXPECT_TRUE(r.passed) << r.max_relative_error;
  EXPECT_EQ(r.parameters_checked, 5u);
}

TEST(GradCheck, FullMlpBothRoles) {
  std::mt19937_64 rng(17);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const Role role = trial % 2 ? Role::Classifier : Role::Regressor;
    const auto m = mlp_init({6, 8, 5, 1}, role, 1000 + static_cast<std::uint64_t>(trial));
    const auto x = random_input(rng, 6);
    if (hidden_margin(forward(m, x)) < 1e-3) continue;
    const ScalarLoss loss = role == Role::Classifier
                                ? ScalarLoss{[](double s) { return -std::log(s); }, [](double s) { return -1.0 / s; }}
                                : squared_loss(1.3);
    const auto r = grad_check(m, loss, x, 1e-4);
    EXPECT_TRUE(r.passed) << "trial " << trial << " error " << r.max_relative_error;
    ++checked;
  }
  EXPECT_GT(checked, 30);
}

TEST(GradCheck, SignFlipIsCaught) {
  const auto m = mlp_init({4, 6, 1}, Role::Regressor, 8);
  const AnalyticGradient flipped = [](const MlpModel& mm, const ForwardCache& c, double d) {
    auto g = backward(mm, c, d);
    g.weights[0] *= -1.0;
    return g;
  };
  const auto r = grad_check(m, squared_loss(2.0), std::vector<double>{1, 0.5, -0.3, 2}, 1e-4, 1e-5, flipped);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.max_relative_error, 1.0);
}
