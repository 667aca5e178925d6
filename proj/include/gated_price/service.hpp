#pragma once

// Price suggestion for a single listing and the HTTP service around it.
//
//   POST /v1/price   {"visual_features":[...], "category_id":3, "seller_id":"s1"}
//                 -> {"qualified":true, "score":0.83, "suggested_price":97.4, "model_version":"..."}
//   GET  /v1/health -> {"status":"ok", "checkpoint_crc":"1a2b3c4d", "model_version":"..."}
//
// Malformed bodies answer 400, feature vectors of the wrong length 422.

#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "gated_price/checkpoint.hpp"
#include "gated_price/core_types.hpp"
#include "gated_price/data_pipeline.hpp"
#include "gated_price/error.hpp"
#include "gated_price/nn.hpp"
#include "gated_price/objective.hpp"
#include "gated_price/trainer.hpp"

namespace gprice {

struct PriceRequest {
  std::vector<double> visual_features;
  int category_id = kMinCategory;
  std::string seller_id;
};

struct PriceResponse {
  bool qualified = false;
  double score = 0.0;
  std::optional<double> suggested_price;
};

/// Gate first; the regressor only runs for qualified listings.
inline PriceResponse predict(const Checkpoint& c, const PriceRequest& req) {
  if (req.visual_features.size() != c.visual_dim) {
    fail(ErrorKind::DimensionMismatch, "expected " + std::to_string(c.visual_dim) + " visual features, got " +
                                           std::to_string(req.visual_features.size()));
  }
  const auto stats = lookup_stats(c.stats, req.category_id, req.seller_id).flatten();
  const auto raw = concat_input(req.visual_features, stats);
  std::vector<double> x(raw.size());
  c.standardizer.apply(raw, x.data());

  PriceResponse r;
  r.score = nn::predict(c.classifier, x);
  r.qualified = indicator_c1(r.score) == 1;
  if (r.qualified) r.suggested_price = std::exp(nn::predict(c.regressor, x));
  return r;
}

inline std::string crc_hex(std::uint32_t crc) {
  char buf[9];
  std::snprintf(buf, sizeof(buf), "%08x", crc);
  return buf;
}

inline std::string model_version(const Checkpoint& c) {
  return "gprc" + std::to_string(c.format_version) + "-" + (c.crc ? crc_hex(*c.crc) : std::string("unsaved"));
}

inline PriceRequest parse_price_request(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("body is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::ParseError, "body must be a JSON object");
  for (const char* key : {"visual_features", "category_id", "seller_id"}) {
    if (!j.contains(key)) fail(ErrorKind::ParseError, std::string("missing field '") + key + "'");
  }
  const auto& f = j["visual_features"];
  if (!f.is_array()) fail(ErrorKind::ParseError, "visual_features must be an array of numbers");
  PriceRequest req;
  for (const auto& v : f) {
    if (!v.is_number()) fail(ErrorKind::ParseError, "visual_features must be an array of numbers");
    req.visual_features.push_back(v.get<double>());
    if (!std::isfinite(req.visual_features.back())) fail(ErrorKind::ParseError, "visual features must be finite");
  }
  if (!j["category_id"].is_number_integer()) fail(ErrorKind::ParseError, "category_id must be an integer");
  req.category_id = j["category_id"].get<int>();
  if (req.category_id < kMinCategory || req.category_id > kMaxCategory) {
    fail(ErrorKind::BadCategory, "category_id must be in 1..13");
  }
  if (!j["seller_id"].is_string()) fail(ErrorKind::ParseError, "seller_id must be a string");
  req.seller_id = j["seller_id"].get<std::string>();
  return req;
}

inline nlohmann::json to_json(const PriceResponse& r, const Checkpoint& c) {
  nlohmann::json j;
  j["qualified"] = r.qualified;
  j["score"] = r.score;
  if (r.suggested_price) j["suggested_price"] = *r.suggested_price;
  j["model_version"] = model_version(c);
  return j;
}

struct HttpReply {
  int status = 200;
  std::string body;
};

inline HttpReply error_reply(int status, const std::string& message) {
  return {status, nlohmann::json{{"error", message}}.dump()};
}

/// The whole request path of POST /v1/price, independent of the transport.
inline HttpReply handle_price_request(const Checkpoint& c, const std::string& body) {
  PriceRequest req;
  try {
    req = parse_price_request(body);
  } catch (const Error& e) {
    return error_reply(400, e.what());
  }
  try {
    return {200, to_json(predict(c, req), c).dump()};
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::DimensionMismatch) return error_reply(422, e.what());
    return error_reply(500, e.what());
  }
}

inline HttpReply handle_health(const Checkpoint& c) {
  nlohmann::json j;
  j["status"] = "ok";
  j["checkpoint_crc"] = c.crc ? crc_hex(*c.crc) : std::string();
  j["model_version"] = model_version(c);
  return {200, j.dump()};
}

/// Routes bound to a checkpoint that must outlive the server.
inline std::unique_ptr<httplib::Server> make_server(const Checkpoint& c) {
  auto server = std::make_unique<httplib::Server>();
  server->Post("/v1/price", [&c](const httplib::Request& req, httplib::Response& res) {
    const auto reply = handle_price_request(c, req.body);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
  server->Get("/v1/health", [&c](const httplib::Request&, httplib::Response& res) {
    const auto reply = handle_health(c);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
  return server;
}

}  // namespace gprice
