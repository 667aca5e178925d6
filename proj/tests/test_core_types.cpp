#include <cmath>

#include <gtest/gtest.h>

#include "gated_price/core_types.hpp"
#include "gated_price/error.hpp"

using namespace gprice;

namespace {

ListingExample consistent(std::size_t visual_dim) {
  ListingExample e;
  e.item_id = "a";
  e.seller_id = "s";
  e.category_id = 3;
  e.sold_price = 1.0;
  e.log_price = 0.0;
  e.visual_features.assign(visual_dim, 0.25);
  e.stat_features.assign(kStatDim, 1.5);
  std::array<double, kStatDim> stats{};
  stats.fill(1.5);
  e.input = concat_input(e.visual_features, stats);
  return e;
}

ErrorKind kind_of(const ListingExample& e) {
  try {
    validate_example(e);
  } catch (const Error& err) {
    return err.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::ParseError;
}

}  // namespace

TEST(ValidateExample, ConsistentExamplePasses) { EXPECT_NO_THROW(validate_example(consistent(32))); }

TEST(ValidateExample, NegativePrice) {
  auto e = consistent(32);
  e.sold_price = -5;
  EXPECT_EQ(kind_of(e), ErrorKind::NonPositivePrice);
}

TEST(ValidateExample, LogPriceMustMatch) {
  auto e = consistent(4);
  e.sold_price = std::exp(2.0);
  e.log_price = 2.1;
  EXPECT_EQ(kind_of(e), ErrorKind::NonPositivePrice);
  e.log_price = 2.0;
  EXPECT_NO_THROW(validate_example(e));
}

TEST(ValidateExample, InputOfWrongLength) {
  auto e = consistent(32);
  e.input.resize(40);
  EXPECT_EQ(kind_of(e), ErrorKind::DimensionMismatch);
}

TEST(ValidateExample, CategoryRange) {
  auto e = consistent(2);
  e.category_id = 0;
  EXPECT_EQ(kind_of(e), ErrorKind::BadCategory);
  e.category_id = 14;
  EXPECT_EQ(kind_of(e), ErrorKind::BadCategory);
  e.category_id = 13;
  EXPECT_NO_THROW(validate_example(e));
}

TEST(ValidateExample, InputMustBeTheConcatenation) {
  auto e = consistent(3);
  e.input[1] = 9.0;
  EXPECT_EQ(kind_of(e), ErrorKind::DimensionMismatch);
  e = consistent(3);
  e.input.back() = 9.0;
  EXPECT_EQ(kind_of(e), ErrorKind::DimensionMismatch);
}

TEST(StatFeatures, FlattenOrder) {
  StatFeatures s{{1, 2, 3, 4}, {5, 6, 7, 8}, {9, 10, 11, 12}};
  const auto f = s.flatten();
  for (std::size_t i = 0; i < kStatDim; ++i) EXPECT_EQ(f[i], static_cast<double>(i + 1));
  EXPECT_TRUE(s.valid());
  s.category = {3, 2, 1, 2};
  EXPECT_FALSE(s.valid());
}

TEST(ObjectiveConfig, Validation) {
  ObjectiveConfig c;
  EXPECT_NO_THROW(c.validate());
  c.delta = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.beta = -1;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.mode = ObjectiveMode::Threshold;
  c.epsilon = 0.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(MlpModel, ParameterCount) {
  MlpModel m;
  m.layer_dims = {44, 64, 32, 1};
  for (std::size_t l = 0; l + 1 < m.layer_dims.size(); ++l) {
    m.weights.push_back(Eigen::MatrixXd::Zero(m.layer_dims[l + 1], m.layer_dims[l]));
    m.biases.push_back(Eigen::VectorXd::Zero(m.layer_dims[l + 1]));
  }
  EXPECT_EQ(m.input_dim(), 44);
  EXPECT_EQ(m.num_layers(), 3u);
  EXPECT_EQ(m.num_parameters(), 44u * 64 + 64 + 64 * 32 + 32 + 32 + 1);
}
