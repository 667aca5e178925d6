#pragma once

// Transaction ingestion, outlier trimming, log transform, historical price
// statistics, example assembly and dataset splitting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "gated_price/core_types.hpp"
#include "gated_price/error.hpp"
#include "gated_price/text_io.hpp"

namespace gprice {

struct TransactionRow {
  std::string item_id;
  std::string seller_id;
  int category_id = kMinCategory;
  double sold_price = 1.0;
  std::vector<double> visual_features;
};

struct TransactionTable {
  std::vector<TransactionRow> rows;

  std::size_t size() const { return rows.size(); }
  bool empty() const { return rows.empty(); }
  /// Visual dimension shared by all rows (0 for an empty table).
  std::size_t visual_dim() const { return rows.empty() ? 0 : rows.front().visual_features.size(); }
};

// ---------------------------------------------------------------------------
// Elementary transforms

inline double log_transform(double price) {
  if (!(price > 0.0) || !std::isfinite(price)) {
    fail(ErrorKind::NonPositivePrice, "cannot take the log of " + std::to_string(price));
  }
  return std::log(price);
}

/// Linear interpolation between closest ranks over an ascending list.
inline double quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) fail(ErrorKind::EmptyInput, "quantile of an empty list");
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorKind::BadFraction, "quantile level must be in [0,1]");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted[lo];
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

/// Quartiles and mean; the mean sums in sorted order so the result does not
/// depend on the input order.
inline PriceSummary summarize(std::vector<double> values) {
  if (values.empty()) fail(ErrorKind::EmptyInput, "cannot summarize an empty list");
  std::sort(values.begin(), values.end());
  PriceSummary s;
  s.q1 = quantile(values, 0.25);
  s.q2 = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  return s;
}

/// Population-moment skewness m3 / m2^1.5.
inline double skewness(std::span<const double> values) {
  if (values.size() < 3) fail(ErrorKind::DegenerateInput, "skewness needs at least 3 values");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double m2 = 0.0;
  double m3 = 0.0;
  for (double v : values) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  if (!(m2 > 0.0)) fail(ErrorKind::DegenerateInput, "skewness of a constant list");
  return m3 / std::pow(m2, 1.5);
}

// ---------------------------------------------------------------------------
// Trimming

/// Drops floor(n*fraction/2) rows from each price tail; survivors keep their
/// original order. Ties are ordered by (price, item_id).
inline TransactionTable trim_outliers(const TransactionTable& t, double fraction) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    fail(ErrorKind::BadFraction, "trim fraction must be in [0,1), got " + std::to_string(fraction));
  }
  const std::size_t n = t.size();
  const auto per_tail =
      static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction / 2.0));
  if (per_tail == 0) return t;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ra = t.rows[a];
    const auto& rb = t.rows[b];
    return std::tie(ra.sold_price, ra.item_id) < std::tie(rb.sold_price, rb.item_id);
  });
  std::vector<bool> keep(n, false);
  for (std::size_t k = per_tail; k + per_tail < n; ++k) keep[order[k]] = true;

  TransactionTable out;
  out.rows.reserve(n - 2 * per_tail);
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) out.rows.push_back(t.rows[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Historical statistics

struct StatIndex {
  PriceSummary global;
  std::map<int, PriceSummary> per_category;
  std::map<std::string, PriceSummary> per_seller;
};

inline StatIndex build_stat_index(const TransactionTable& t) {
  if (t.empty()) fail(ErrorKind::EmptyInput, "cannot build statistics from an empty table");
  std::vector<double> all;
  all.reserve(t.size());
  std::map<int, std::vector<double>> by_category;
  std::map<std::string, std::vector<double>> by_seller;
  for (const auto& r : t.rows) {
    const double y = log_transform(r.sold_price);
    all.push_back(y);
    by_category[r.category_id].push_back(y);
    by_seller[r.seller_id].push_back(y);
  }
  StatIndex idx;
  idx.global = summarize(std::move(all));
  for (auto& [k, v] : by_category) idx.per_category.emplace(k, summarize(std::move(v)));
  for (auto& [k, v] : by_seller) idx.per_seller.emplace(k, summarize(std::move(v)));
  return idx;
}

/// Unknown categories or sellers fall back to the global group.
inline StatFeatures lookup_stats(const StatIndex& idx, int category_id, const std::string& seller_id) {
  StatFeatures f;
  f.global = idx.global;
  const auto c = idx.per_category.find(category_id);
  f.category = c != idx.per_category.end() ? c->second : idx.global;
  const auto s = idx.per_seller.find(seller_id);
  f.seller = s != idx.per_seller.end() ? s->second : idx.global;
  return f;
}

namespace detail {

inline std::string summary_value(const PriceSummary& s) {
  return text::join_g17({s.q1, s.q2, s.q3, s.mean});
}

inline PriceSummary parse_summary(std::string_view v) {
  const auto vals = text::parse_double_list(v);
  if (vals.size() != 4) fail(ErrorKind::ParseError, "statistics entry needs 4 values");
  PriceSummary s{vals[0], vals[1], vals[2], vals[3]};
  if (!s.ordered() || !s.finite()) fail(ErrorKind::ParseError, "statistics entry is not ordered");
  return s;
}

}  // namespace detail

/// key=value lines, keys sorted lexicographically.
inline std::map<std::string, std::string> stat_index_entries(const StatIndex& idx) {
  std::map<std::string, std::string> kv;
  kv["built_over"] = "log_prices";
  kv["global"] = detail::summary_value(idx.global);
  for (const auto& [k, s] : idx.per_category) kv["category." + std::to_string(k)] = detail::summary_value(s);
  for (const auto& [k, s] : idx.per_seller) kv["seller." + k] = detail::summary_value(s);
  return kv;
}

inline std::string serialize_stat_index(const StatIndex& idx) {
  std::string out;
  for (const auto& [k, v] : stat_index_entries(idx)) out += k + "=" + v + "\n";
  return out;
}

/// Reads back the entries produced by stat_index_entries; other keys are ignored
/// only when `strict` is false.
inline StatIndex stat_index_from_entries(const std::map<std::string, std::string>& kv, bool strict = true) {
  StatIndex idx;
  bool have_global = false;
  for (const auto& [k, v] : kv) {
    if (k == "global") {
      idx.global = detail::parse_summary(v);
      have_global = true;
    } else if (k == "built_over") {
      if (v != "log_prices") fail(ErrorKind::ParseError, "unsupported built_over=" + v);
    } else if (k.starts_with("category.")) {
      idx.per_category[static_cast<int>(text::parse_int(k.substr(9)))] = detail::parse_summary(v);
    } else if (k.starts_with("seller.")) {
      idx.per_seller[k.substr(7)] = detail::parse_summary(v);
    } else if (strict) {
      fail(ErrorKind::ParseError, "unknown statistics key '" + k + "'");
    }
  }
  if (!have_global) fail(ErrorKind::ParseError, "statistics file lacks a global entry");
  return idx;
}

inline std::map<std::string, std::string> parse_key_values(std::string_view body) {
  std::map<std::string, std::string> kv;
  for (auto line : text::split(body, '\n')) {
    line = text::trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) fail(ErrorKind::ParseError, "expected key=value, got '" + std::string(line) + "'");
    kv[std::string(text::trim(line.substr(0, eq)))] = std::string(text::trim(line.substr(eq + 1)));
  }
  return kv;
}

inline StatIndex parse_stat_index(std::string_view body) { return stat_index_from_entries(parse_key_values(body)); }

inline void save_stat_index(const StatIndex& idx, const std::string& path) {
  text::write_file(path, serialize_stat_index(idx));
}

inline StatIndex load_stat_index(const std::string& path) { return parse_stat_index(text::read_file(path)); }

// ---------------------------------------------------------------------------
// Assembly and splitting

inline ListingExample make_example(const TransactionRow& r, const StatIndex& idx) {
  ListingExample e;
  e.item_id = r.item_id;
  e.seller_id = r.seller_id;
  e.category_id = r.category_id;
  e.sold_price = r.sold_price;
  e.log_price = log_transform(r.sold_price);
  e.visual_features = r.visual_features;
  const auto stats = lookup_stats(idx, r.category_id, r.seller_id).flatten();
  e.stat_features.assign(stats.begin(), stats.end());
  e.input = concat_input(e.visual_features, stats);
  return e;
}

/// `idx` must come from training rows only; validation and test rows reuse it.
inline std::vector<ListingExample> assemble(const TransactionTable& t, const StatIndex& idx) {
  std::vector<ListingExample> out;
  out.reserve(t.size());
  const std::size_t dim = t.visual_dim();
  for (const auto& r : t.rows) {
    if (r.visual_features.size() != dim) {
      fail(ErrorKind::DimensionMismatch, "row '" + r.item_id + "' has " +
                                             std::to_string(r.visual_features.size()) +
                                             " visual features, expected " + std::to_string(dim));
    }
    out.push_back(make_example(r, idx));
  }
  return out;
}

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

template <typename T>
struct Partition {
  std::vector<T> train;
  std::vector<T> validation;
  std::vector<T> test;
};

/// Row counts (train, validation) for n items; test receives the remainder.
inline std::pair<std::size_t, std::size_t> split_counts(std::size_t n, const SplitRatios& r) {
  if (!(r.train >= 0 && r.validation >= 0 && r.test >= 0) ||
      std::abs(r.train + r.validation + r.test - 1.0) > 1e-9) {
    fail(ErrorKind::BadRatios, "split ratios must be nonnegative and sum to 1");
  }
  const auto n_train = std::min<std::size_t>(n, static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.train)));
  const auto n_val = std::min<std::size_t>(n - n_train, static_cast<std::size_t>(std::llround(static_cast<double>(n) * r.validation)));
  return {n_train, n_val};
}

/// Seeded shuffle, then contiguous cut.
template <typename T>
Partition<T> split(const std::vector<T>& items, const SplitRatios& ratios, std::uint64_t seed) {
  const auto [n_train, n_val] = split_counts(items.size(), ratios);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  Partition<T> p;
  p.train.reserve(n_train);
  p.validation.reserve(n_val);
  p.test.reserve(items.size() - n_train - n_val);
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto& dst = k < n_train ? p.train : (k < n_train + n_val ? p.validation : p.test);
    dst.push_back(items[order[k]]);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Transactions CSV

inline std::string transactions_header(std::size_t visual_dim) {
  std::string h = "item_id,seller_id,category_id,sold_price";
  for (std::size_t j = 0; j < visual_dim; ++j) h += ",f" + std::to_string(j);
  return h;
}

inline std::string serialize_transactions(const TransactionTable& t) {
  const std::size_t dim = t.visual_dim();
  std::string out = transactions_header(dim) + "\n";
  for (const auto& r : t.rows) {
    if (r.visual_features.size() != dim) fail(ErrorKind::DimensionMismatch, "ragged visual features");
    out += r.item_id;
    out += ',';
    out += r.seller_id;
    out += ',';
    out += std::to_string(r.category_id);
    out += ',';
    out += text::format_shortest(r.sold_price);
    for (double v : r.visual_features) {
      out += ',';
      out += text::format_shortest(v);
    }
    out += '\n';
  }
  return out;
}

inline TransactionTable parse_transactions(std::string_view body) {
  auto lines = text::split(body, '\n');
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) fail(ErrorKind::ParseError, "transactions CSV has no header");
  const auto header = text::split(lines.front(), ',');
  if (header.size() < 4) fail(ErrorKind::ParseError, "transactions header too short");
  const std::size_t dim = header.size() - 4;
  if (lines.front() != transactions_header(dim)) {
    fail(ErrorKind::ParseError, "unexpected transactions header '" + std::string(lines.front()) + "'");
  }
  TransactionTable t;
  t.rows.reserve(lines.size() - 1);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto cells = text::split(lines[i], ',');
    if (cells.size() != header.size()) {
      fail(ErrorKind::DimensionMismatch, "line " + std::to_string(i + 1) + " has " +
                                             std::to_string(cells.size()) + " fields, expected " +
                                             std::to_string(header.size()));
    }
    TransactionRow r;
    r.item_id = std::string(cells[0]);
    r.seller_id = std::string(cells[1]);
    if (!text::is_plain_token(r.item_id) || !text::is_plain_token(r.seller_id)) {
      fail(ErrorKind::ParseError, "line " + std::to_string(i + 1) + ": bad identifier");
    }
    r.category_id = static_cast<int>(text::parse_int(cells[2]));
    if (r.category_id < kMinCategory || r.category_id > kMaxCategory) {
      fail(ErrorKind::BadCategory, "line " + std::to_string(i + 1) + ": category " + std::string(cells[2]));
    }
    r.sold_price = text::parse_double(cells[3]);
    if (!(r.sold_price > 0.0) || !std::isfinite(r.sold_price)) {
      fail(ErrorKind::NonPositivePrice, "line " + std::to_string(i + 1) + ": price " + std::string(cells[3]));
    }
    r.visual_features.reserve(dim);
    for (std::size_t j = 0; j < dim; ++j) r.visual_features.push_back(text::parse_double(cells[4 + j]));
    t.rows.push_back(std::move(r));
  }
  return t;
}

inline TransactionTable load_transactions(const std::string& path) { return parse_transactions(text::read_file(path)); }

inline void save_transactions(const TransactionTable& t, const std::string& path) {
  text::write_file(path, serialize_transactions(t));
}

/// The full offline pipeline: trim, split rows, index on training rows, assemble all three.
struct PreparedData {
  StatIndex index;
  Partition<ListingExample> examples;
  std::size_t rows_before_trim = 0;
  std::size_t rows_after_trim = 0;
};

inline PreparedData prepare(const TransactionTable& raw, double trim_fraction, const SplitRatios& ratios,
                            std::uint64_t seed) {
  PreparedData d;
  d.rows_before_trim = raw.size();
  const auto trimmed = trim_outliers(raw, trim_fraction);
  d.rows_after_trim = trimmed.size();
  if (trimmed.empty()) fail(ErrorKind::EmptyData, "no rows left after trimming");
  const auto parts = split(trimmed.rows, ratios, seed);
  if (parts.train.empty()) fail(ErrorKind::EmptyData, "training split is empty");
  d.index = build_stat_index(TransactionTable{parts.train});
  d.examples.train = assemble(TransactionTable{parts.train}, d.index);
  d.examples.validation = assemble(TransactionTable{parts.validation}, d.index);
  d.examples.test = assemble(TransactionTable{parts.test}, d.index);
  return d;
}

}  // namespace gprice
