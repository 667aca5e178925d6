#include <Eigen/Dense>
#include <cmath>

#include <gtest/gtest.h>

#include "gated_price/synth.hpp"

using namespace gprice;

namespace {

// Least-squares fit of log price on [1, features, category one-hot, seller one-hot].
double r_squared(const SynthData& d, bool qualified_only) {
  std::vector<const TransactionRow*> rows;
  for (std::size_t i = 0; i < d.table.size(); ++i) {
    if (!qualified_only || d.truth[i].qualified) rows.push_back(&d.table.rows[i]);
  }
  const auto dim = static_cast<Eigen::Index>(d.table.visual_dim());
  std::map<std::string, Eigen::Index> seller_col;
  for (const auto* r : rows) seller_col.emplace(r->seller_id, 0);
  Eigen::Index next = 1 + dim + kMaxCategory;
  for (auto& [k, v] : seller_col) v = next++;
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), next);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const auto& r = *rows[static_cast<std::size_t>(i)];
    X(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < dim; ++j) X(i, 1 + j) = r.visual_features[static_cast<std::size_t>(j)];
    X(i, dim + r.category_id) = 1.0;
    X(i, seller_col[r.seller_id]) = 1.0;
    y(i) = std::log(r.sold_price);
  }
  const Eigen::VectorXd beta = X.completeOrthogonalDecomposition().solve(y);
  const double ss_res = (y - X * beta).squaredNorm();
  const double ss_tot = (y.array() - y.mean()).square().sum();
  return 1.0 - ss_res / ss_tot;
}

// Fit on visual features only.
double visual_r_squared(const SynthData& d, bool want_qualified) {
  std::vector<const TransactionRow*> rows;
  for (std::size_t i = 0; i < d.table.size(); ++i) {
    if (d.truth[i].qualified == want_qualified) rows.push_back(&d.table.rows[i]);
  }
  const auto dim = static_cast<Eigen::Index>(d.table.visual_dim());
  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), dim + 1);
  Eigen::VectorXd y(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    X(i, 0) = 1.0;
    for (Eigen::Index j = 0; j < dim; ++j) X(i, 1 + j) = rows[static_cast<std::size_t>(i)]->visual_features[static_cast<std::size_t>(j)];
    y(i) = std::log(rows[static_cast<std::size_t>(i)]->sold_price);
  }
  const Eigen::VectorXd beta = X.colPivHouseholderQr().solve(y);
  return 1.0 - (y - X * beta).squaredNorm() / (y.array() - y.mean()).square().sum();
}

}  // namespace

TEST(Synth, CleanCorpusIsLinear) {
  SynthConfig cfg;
  cfg.n = 3000;
  cfg.noise_fraction = 0.0;
  cfg.clarity_spread = 0.0;
  cfg.noise_sigma = 0.05;
  const auto d = generate(cfg);
  EXPECT_GT(r_squared(d, false), 0.9);
}

TEST(Synth, UnqualifiedFeaturesCarryNoPriceSignal) {
  SynthConfig cfg;
  cfg.n = 4000;
  cfg.noise_fraction = 0.5;
  const auto d = generate(cfg);
  EXPECT_GT(visual_r_squared(d, true), 0.3);
  // 32 random regressors on ~2000 rows: R^2 around 32/2000 by chance
  EXPECT_LT(visual_r_squared(d, false), 0.04);

  cfg.noise_fraction = 1.0;
  const auto all_bad = generate(cfg);
  EXPECT_LT(visual_r_squared(all_bad, false), 0.02);
}

TEST(Synth, PriceMarginalDoesNotRevealTheFlag) {
  SynthConfig cfg;
  cfg.n = 10000;
  const auto d = generate(cfg);
  double sum[2] = {0, 0};
  double sq[2] = {0, 0};
  double cnt[2] = {0, 0};
  for (std::size_t i = 0; i < d.table.size(); ++i) {
    const int k = d.truth[i].qualified ? 1 : 0;
    const double y = std::log(d.table.rows[i].sold_price);
    sum[k] += y;
    sq[k] += y * y;
    cnt[k] += 1;
  }
  const double m0 = sum[0] / cnt[0], m1 = sum[1] / cnt[1];
  EXPECT_NEAR(m0, m1, 0.05);
  EXPECT_NEAR(std::sqrt(sq[0] / cnt[0] - m0 * m0), std::sqrt(sq[1] / cnt[1] - m1 * m1), 0.05);
}

TEST(Synth, ExactUnqualifiedCount) {
  for (double rho : {0.0, 0.1, 0.3, 0.333, 1.0}) {
    SynthConfig cfg;
    cfg.n = 1001;
    cfg.noise_fraction = rho;
    const auto d = generate(cfg);
    std::size_t bad = 0;
    for (const auto& t : d.truth) bad += t.qualified ? 0 : 1;
    EXPECT_EQ(bad, unqualified_count(cfg));
    EXPECT_EQ(bad, static_cast<std::size_t>(std::llround(rho * 1001)));
  }
}

TEST(Synth, SameSeedSameBytes) {
  SynthConfig cfg;
  cfg.n = 500;
  const auto a = generate(cfg);
  const auto b = generate(cfg);
  EXPECT_EQ(serialize_transactions(a.table), serialize_transactions(b.table));
  EXPECT_EQ(serialize_truth(a.truth), serialize_truth(b.truth));
  cfg.seed += 1;
  EXPECT_NE(serialize_transactions(generate(cfg).table), serialize_transactions(a.table));
}

TEST(Synth, RowsAreValidAndTruthRoundTrips) {
  SynthConfig cfg;
  cfg.n = 300;
  cfg.visual_dim = 5;
  const auto d = generate(cfg);
  for (const auto& r : d.table.rows) {
    EXPECT_GT(r.sold_price, 0.0);
    EXPECT_GE(r.category_id, 1);
    EXPECT_LE(r.category_id, 13);
    EXPECT_EQ(r.visual_features.size(), 5u);
  }
  const auto back = parse_truth(serialize_truth(d.truth));
  ASSERT_EQ(back.size(), d.truth.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].item_id, d.truth[i].item_id);
    EXPECT_EQ(back[i].qualified, d.truth[i].qualified);
  }
}

TEST(Synth, BadConfig) {
  SynthConfig cfg;
  cfg.noise_fraction = 1.2;
  EXPECT_THROW(generate(cfg), Error);
  cfg = {};
  cfg.n_categories = 14;
  EXPECT_THROW(generate(cfg), Error);
}
