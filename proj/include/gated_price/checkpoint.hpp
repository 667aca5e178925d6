#pragma once

// Checkpoint file:
//   "GPRC1\n"
//   key=value metadata lines, then one blank line
//   little-endian float32 blobs: classifier weights, classifier biases,
//   regressor weights, regressor biases, then the Adam moments of both models
//   in the same order (m before v)
//   little-endian CRC-32 of every preceding byte

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <boost/crc.hpp>

#include "gated_price/data_pipeline.hpp"
#include "gated_price/error.hpp"
#include "gated_price/nn.hpp"
#include "gated_price/text_io.hpp"
#include "gated_price/trainer.hpp"

namespace gprice {

inline constexpr std::string_view kCheckpointMagic = "GPRC1\n";

inline std::uint32_t crc32(std::string_view bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

namespace detail {

inline void put_f32(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFFu));
}

inline std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + k])) << (8 * k);
  return v;
}

template <typename Params>
void put_weights(std::string& out, const Params& p) {
  for (const auto& w : p.weights) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) put_f32(out, w(r, c));
    }
  }
}

template <typename Params>
void put_biases(std::string& out, const Params& p) {
  for (const auto& b : p.biases) {
    for (Eigen::Index r = 0; r < b.size(); ++r) put_f32(out, b(r));
  }
}

class BlobReader {
 public:
  BlobReader(std::string_view bytes, std::size_t at) : bytes_(bytes), at_(at) {}

  double next() {
    if (at_ + 4 > bytes_.size()) fail(ErrorKind::ChecksumMismatch, "parameter blob is truncated");
    const float f = std::bit_cast<float>(get_u32(bytes_, at_));
    at_ += 4;
    return static_cast<double>(f);
  }

  template <typename Params>
  void read_weights(Params& p) {
    for (auto& w : p.weights) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = next();
      }
    }
  }

  template <typename Params>
  void read_biases(Params& p) {
    for (auto& b : p.biases) {
      for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = next();
    }
  }

  std::size_t position() const { return at_; }

 private:
  std::string_view bytes_;
  std::size_t at_;
};

inline std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

inline std::vector<int> parse_ints(std::string_view s) {
  std::vector<int> out;
  if (text::trim(s).empty()) return out;
  for (auto part : text::split(s, ',')) out.push_back(static_cast<int>(text::parse_int(part)));
  return out;
}

inline std::string adam_meta(const nn::AdamState& s) {
  return std::to_string(s.t) + "," + text::join_g17({s.lr, s.beta1, s.beta2, s.eps});
}

inline void parse_adam_meta(std::string_view v, nn::AdamState& s) {
  const auto parts = text::split(v, ',');
  if (parts.size() != 5) fail(ErrorKind::ParseError, "bad adam metadata");
  s.t = static_cast<std::uint64_t>(text::parse_int(parts[0]));
  s.lr = text::parse_double(parts[1]);
  s.beta1 = text::parse_double(parts[2]);
  s.beta2 = text::parse_double(parts[3]);
  s.eps = text::parse_double(parts[4]);
}

inline std::string schedule_meta(const std::vector<Phase>& schedule) {
  std::string out;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (i) out += ';';
    out += to_string(schedule[i].stage) + ":" + text::format_g17(schedule[i].lr) + ":" +
           std::to_string(schedule[i].epochs);
  }
  return out;
}

inline std::vector<Phase> parse_schedule_meta(std::string_view v) {
  std::vector<Phase> out;
  if (text::trim(v).empty()) return out;
  for (auto item : text::split(v, ';')) {
    const auto parts = text::split(item, ':');
    if (parts.size() != 3 || (parts[0] != "warmup" && parts[0] != "joint")) {
      fail(ErrorKind::ParseError, "bad schedule entry '" + std::string(item) + "'");
    }
    out.push_back({parts[0] == "warmup" ? Stage::Warmup : Stage::Joint, text::parse_double(parts[1]),
                   static_cast<std::size_t>(text::parse_int(parts[2]))});
  }
  return out;
}

inline const std::string& require(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto it = kv.find(key);
  if (it == kv.end()) fail(ErrorKind::ParseError, "checkpoint metadata lacks '" + key + "'");
  return it->second;
}

inline MlpModel shaped_model(const std::vector<int>& dims, Role role) {
  nn::validate_dims(dims);
  return nn::mlp_init(dims, role, 0);
}

}  // namespace detail

/// Serialized bytes, CRC included. Parameters are stored at float32 precision.
inline std::string serialize_checkpoint(const Checkpoint& c) {
  std::string out(kCheckpointMagic);
  const auto& o = c.config.objective;
  auto line = [&](const std::string& k, const std::string& v) { out += k + "=" + v + "\n"; };
  line("format_version", std::to_string(c.format_version));
  line("mode", to_string(o.mode));
  line("delta", text::format_g17(o.delta));
  line("beta", text::format_g17(o.beta));
  line("gamma", text::format_g17(o.gamma));
  line("epsilon", text::format_g17(o.epsilon));
  line("classifier_dims", detail::join_ints(c.classifier.layer_dims));
  line("regressor_dims", detail::join_ints(c.regressor.layer_dims));
  line("d_v", std::to_string(c.visual_dim));
  line("standardize", c.config.standardize ? "1" : "0");
  line("standardize_mean", text::join_g17(c.standardizer.mean));
  line("standardize_std", text::join_g17(c.standardizer.std));
  line("batch_size", std::to_string(c.config.batch_size));
  line("seed", std::to_string(c.config.seed));
  line("schedule", detail::schedule_meta(c.config.schedule));
  line("hidden_dims", detail::join_ints(c.config.hidden_dims));
  line("adam_classifier", detail::adam_meta(c.classifier_adam));
  line("adam_regressor", detail::adam_meta(c.regressor_adam));
  for (const auto& [k, v] : stat_index_entries(c.stats)) line("stat." + k, v);
  out += "\n";

  detail::put_weights(out, c.classifier);
  detail::put_biases(out, c.classifier);
  detail::put_weights(out, c.regressor);
  detail::put_biases(out, c.regressor);
  for (const auto* adam : {&c.classifier_adam, &c.regressor_adam}) {
    for (const auto* moment : {&adam->m, &adam->v}) {
      detail::put_weights(out, *moment);
      detail::put_biases(out, *moment);
    }
  }
  const std::uint32_t crc = crc32(out);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((crc >> (8 * k)) & 0xFFu));
  return out;
}

inline Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    if (bytes.size() >= kCheckpointMagic.size() || !kCheckpointMagic.starts_with(bytes)) {
      fail(ErrorKind::BadMagic, "not a checkpoint file");
    }
  }
  if (bytes.size() < kCheckpointMagic.size() + 4) fail(ErrorKind::ChecksumMismatch, "checkpoint is truncated");
  const std::size_t body = bytes.size() - 4;
  if (crc32(bytes.substr(0, body)) != detail::get_u32(bytes, body)) {
    fail(ErrorKind::ChecksumMismatch, "checkpoint CRC does not match its contents");
  }

  const std::size_t meta_end = bytes.find("\n\n", kCheckpointMagic.size() - 1);
  if (meta_end == std::string_view::npos || meta_end + 2 > body) fail(ErrorKind::ParseError, "metadata block not terminated");
  const auto meta = bytes.substr(kCheckpointMagic.size(), meta_end + 1 - kCheckpointMagic.size());
  const auto kv = parse_key_values(meta);

  Checkpoint c;
  c.format_version = static_cast<std::uint32_t>(text::parse_int(detail::require(kv, "format_version")));
  if (c.format_version != kCheckpointFormatVersion) {
    fail(ErrorKind::VersionMismatch, "checkpoint format " + std::to_string(c.format_version) + ", expected " +
                                         std::to_string(kCheckpointFormatVersion));
  }
  auto& o = c.config.objective;
  const auto& mode = detail::require(kv, "mode");
  if (mode != "percentile" && mode != "threshold") fail(ErrorKind::ParseError, "unknown mode '" + mode + "'");
  o.mode = mode == "percentile" ? ObjectiveMode::Percentile : ObjectiveMode::Threshold;
  o.delta = text::parse_double(detail::require(kv, "delta"));
  o.beta = text::parse_double(detail::require(kv, "beta"));
  o.gamma = text::parse_double(detail::require(kv, "gamma"));
  o.epsilon = text::parse_double(detail::require(kv, "epsilon"));
  c.visual_dim = static_cast<std::size_t>(text::parse_int(detail::require(kv, "d_v")));
  c.config.standardize = detail::require(kv, "standardize") == "1";
  c.standardizer.mean = text::parse_double_list(detail::require(kv, "standardize_mean"));
  c.standardizer.std = text::parse_double_list(detail::require(kv, "standardize_std"));
  c.config.batch_size = static_cast<std::size_t>(text::parse_int(detail::require(kv, "batch_size")));
  c.config.seed = static_cast<std::uint64_t>(std::stoull(detail::require(kv, "seed")));
  c.config.schedule = detail::parse_schedule_meta(detail::require(kv, "schedule"));
  c.config.hidden_dims = detail::parse_ints(detail::require(kv, "hidden_dims"));

  c.classifier = detail::shaped_model(detail::parse_ints(detail::require(kv, "classifier_dims")), Role::Classifier);
  c.regressor = detail::shaped_model(detail::parse_ints(detail::require(kv, "regressor_dims")), Role::Regressor);
  if (static_cast<std::size_t>(c.classifier.input_dim()) != c.input_dim() ||
      static_cast<std::size_t>(c.regressor.input_dim()) != c.input_dim() ||
      c.standardizer.mean.size() != c.input_dim() || c.standardizer.std.size() != c.input_dim()) {
    fail(ErrorKind::DimensionMismatch, "checkpoint dimensions are inconsistent");
  }
  c.classifier_adam = nn::AdamState::for_model(c.classifier, 1.0);
  c.regressor_adam = nn::AdamState::for_model(c.regressor, 1.0);
  detail::parse_adam_meta(detail::require(kv, "adam_classifier"), c.classifier_adam);
  detail::parse_adam_meta(detail::require(kv, "adam_regressor"), c.regressor_adam);

  std::map<std::string, std::string> stat_kv;
  for (const auto& [k, v] : kv) {
    if (k.starts_with("stat.")) stat_kv[k.substr(5)] = v;
  }
  c.stats = stat_index_from_entries(stat_kv);

  detail::BlobReader reader(bytes.substr(0, body), meta_end + 2);
  reader.read_weights(c.classifier);
  reader.read_biases(c.classifier);
  reader.read_weights(c.regressor);
  reader.read_biases(c.regressor);
  for (auto* adam : {&c.classifier_adam, &c.regressor_adam}) {
    for (auto* moment : {&adam->m, &adam->v}) {
      reader.read_weights(*moment);
      reader.read_biases(*moment);
    }
  }
  if (reader.position() != body) fail(ErrorKind::ParseError, "trailing bytes after parameter blobs");
  c.crc = detail::get_u32(bytes, body);
  return c;
}

/// Writes the checkpoint and records its CRC in `c`.
inline void save_checkpoint(Checkpoint& c, const std::string& path) {
  const auto bytes = serialize_checkpoint(c);
  text::write_file(path, bytes);
  c.crc = detail::get_u32(bytes, bytes.size() - 4);
}

inline Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(text::read_file(path)); }

/// Copy of `c` with every parameter rounded to float32, i.e. what a save/load
/// round trip reproduces.
inline Checkpoint rounded_to_storage(const Checkpoint& c) {
  Checkpoint r = c;
  auto round = [](double& v) { v = static_cast<double>(static_cast<float>(v)); };
  nn::for_each_parameter(r.classifier, round);
  nn::for_each_parameter(r.regressor, round);
  return r;
}

}  // namespace gprice
