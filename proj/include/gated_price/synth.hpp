#pragma once

// Synthetic marketplace with a known price model and a planted subpopulation
// of "unqualified" listings whose features carry no price signal.
//
// Every row has latent visual content v ~ N(0, I) and a price
//   y = base + w.v + b_c + u_s + eta,   eta ~ N(0, noise_sigma^2),
// with w scaled so that w.v has standard deviation signal_scale.
//
// Observed features are v with some coordinates washed out (replaced by
// washout_scale * N(0, 1), the blurred / badly lit part of an image).
// Qualified rows lose each coordinate with a per-row probability
// tau ~ U(0, clarity_spread); unqualified rows lose all of them, so their
// features say nothing about the price.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gated_price/data_pipeline.hpp"
#include "gated_price/error.hpp"
#include "gated_price/text_io.hpp"

namespace gprice {

struct SynthConfig {
  std::size_t n = 20000;
  std::size_t visual_dim = 32;
  int n_categories = kMaxCategory;
  std::size_t n_sellers = 100;
  double noise_fraction = 0.3;
  double noise_sigma = 0.1;
  std::uint64_t seed = 7;

  double base_log_price = 4.5;
  double signal_scale = 0.8;
  double category_scale = 0.5;
  double seller_scale = 0.3;
  double clarity_spread = 0.6;
  double washout_scale = 0.35;
  double seller_zipf_exponent = 0.8;

  void validate() const {
    if (n == 0) fail(ErrorKind::BadConfig, "n must be positive");
    if (visual_dim == 0) fail(ErrorKind::BadConfig, "visual_dim must be >= 1");
    if (n_categories < 1 || n_categories > kMaxCategory) fail(ErrorKind::BadConfig, "n_categories must be in 1..13");
    if (n_sellers == 0) fail(ErrorKind::BadConfig, "n_sellers must be >= 1");
    if (!(noise_fraction >= 0.0 && noise_fraction <= 1.0)) fail(ErrorKind::BadConfig, "noise_fraction must be in [0,1]");
    if (!(noise_sigma > 0.0)) fail(ErrorKind::BadConfig, "noise_sigma must be positive");
    if (!(clarity_spread >= 0.0 && clarity_spread <= 1.0) || !(washout_scale > 0.0) || !(signal_scale >= 0.0) ||
        !(category_scale >= 0.0) || !(seller_scale >= 0.0) || !(seller_zipf_exponent >= 0.0)) {
      fail(ErrorKind::BadConfig, "generator scales must be nonnegative");
    }
  }
};

struct TruthRow {
  std::string item_id;
  bool qualified = true;
};

struct SynthData {
  TransactionTable table;
  std::vector<TruthRow> truth;
};

/// Exact number of unqualified rows produced for a config.
inline std::size_t unqualified_count(const SynthConfig& cfg) {
  return static_cast<std::size_t>(std::llround(cfg.noise_fraction * static_cast<double>(cfg.n)));
}

inline SynthData generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Hidden price model, drawn once.
  std::vector<double> w(cfg.visual_dim);
  double norm2 = 0.0;
  for (auto& x : w) {
    x = normal(rng);
    norm2 += x * x;
  }
  for (auto& x : w) x *= cfg.signal_scale / std::sqrt(norm2);
  std::vector<double> category_effect(static_cast<std::size_t>(cfg.n_categories) + 1, 0.0);
  for (int c = 1; c <= cfg.n_categories; ++c) category_effect[static_cast<std::size_t>(c)] = cfg.category_scale * normal(rng);
  std::vector<double> seller_effect(cfg.n_sellers);
  for (auto& u : seller_effect) u = cfg.seller_scale * normal(rng);

  std::vector<double> seller_weights(cfg.n_sellers);
  for (std::size_t k = 0; k < cfg.n_sellers; ++k) {
    seller_weights[k] = 1.0 / std::pow(static_cast<double>(k + 1), cfg.seller_zipf_exponent);
  }
  std::discrete_distribution<std::size_t> pick_seller(seller_weights.begin(), seller_weights.end());
  std::uniform_int_distribution<int> pick_category(1, cfg.n_categories);
  std::uniform_real_distribution<double> pick_tau(0.0, cfg.clarity_spread);

  std::vector<bool> qualified(cfg.n, true);
  std::fill_n(qualified.begin(), unqualified_count(cfg), false);
  std::shuffle(qualified.begin(), qualified.end(), rng);

  SynthData out;
  out.table.rows.reserve(cfg.n);
  out.truth.reserve(cfg.n);
  std::vector<double> latent(cfg.visual_dim);
  for (std::size_t i = 0; i < cfg.n; ++i) {
    TransactionRow r;
    r.item_id = "item" + std::to_string(i);
    r.category_id = pick_category(rng);
    const std::size_t seller = pick_seller(rng);
    r.seller_id = "s" + std::to_string(seller);

    for (auto& x : latent) x = normal(rng);
    double signal = 0.0;
    for (std::size_t j = 0; j < cfg.visual_dim; ++j) signal += w[j] * latent[j];

    r.visual_features.resize(cfg.visual_dim);
    const double tau = qualified[i] ? (cfg.clarity_spread > 0.0 ? pick_tau(rng) : 0.0) : 1.0;
    std::bernoulli_distribution washed_out(tau);
    for (std::size_t j = 0; j < cfg.visual_dim; ++j) {
      r.visual_features[j] = washed_out(rng) ? cfg.washout_scale * normal(rng) : latent[j];
    }
    const double y = cfg.base_log_price + signal + category_effect[static_cast<std::size_t>(r.category_id)] +
                     seller_effect[seller] + cfg.noise_sigma * normal(rng);
    r.sold_price = std::exp(y);
    out.truth.push_back({r.item_id, qualified[i]});
    out.table.rows.push_back(std::move(r));
  }
  return out;
}

inline std::string serialize_truth(const std::vector<TruthRow>& truth) {
  std::string out = "item_id,qualified\n";
  for (const auto& t : truth) out += t.item_id + (t.qualified ? ",1\n" : ",0\n");
  return out;
}

inline std::vector<TruthRow> parse_truth(std::string_view body) {
  auto lines = text::split(body, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty() || lines.front() != "item_id,qualified") fail(ErrorKind::ParseError, "bad truth header");
  std::vector<TruthRow> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = text::split(lines[i], ',');
    if (cells.size() != 2 || (cells[1] != "0" && cells[1] != "1")) {
      fail(ErrorKind::ParseError, "bad truth line " + std::to_string(i + 1));
    }
    out.push_back({std::string(cells[0]), cells[1] == "1"});
  }
  return out;
}

/// Writes <dir>/<name>.csv and <dir>/<name>.truth.csv.
inline std::pair<std::string, std::string> save_synth(const SynthData& d, const std::string& dir,
                                                      const std::string& name) {
  std::string base = dir;
  if (!base.empty() && base.back() != '/') base += '/';
  base += name;
  const std::string csv = base + ".csv";
  const std::string truth = base + ".truth.csv";
  save_transactions(d.table, csv);
  text::write_file(truth, serialize_truth(d.truth));
  return {csv, truth};
}

}  // namespace gprice
