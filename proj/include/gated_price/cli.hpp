#pragma once

// Command-line front end: synth, stats, train, eval, sweep, predict, serve.
//
// Every subcommand accepts --config <file> with key=value lines whose keys are
// the subcommand's long option names. Flags given on the command line win over
// the config file, which wins over the file named by GATED_PRICE_CONFIG.
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gated_price/checkpoint.hpp"
#include "gated_price/data_pipeline.hpp"
#include "gated_price/error.hpp"
#include "gated_price/eval.hpp"
#include "gated_price/service.hpp"
#include "gated_price/synth.hpp"
#include "gated_price/text_io.hpp"
#include "gated_price/trainer.hpp"

namespace gprice::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

// Required options are checked after the config file has been applied, so
// they can come from either place.
inline const std::string kRequiredGroup = "Required";

inline void check_required(const CLI::App* app) {
  for (const CLI::Option* opt : app->get_options()) {
    if (opt->get_group() == kRequiredGroup && opt->count() == 0) {
      throw UsageError(opt->get_name() + " is required");
    }
  }
}

}  // namespace detail

inline std::vector<Phase> parse_schedule(const std::string& value) {
  if (value == "desk") return desk_schedule();
  if (value == "reference") return reference_schedule();
  std::vector<Phase> out;
  for (auto item : text::split(value, ';')) {
    const auto parts = text::split(item, ':');
    if (parts.size() != 3 || (parts[0] != "warmup" && parts[0] != "joint")) {
      throw UsageError("schedule entries look like warmup:0.0005:20, got '" + std::string(item) + "'");
    }
    out.push_back({parts[0] == "warmup" ? Stage::Warmup : Stage::Joint, text::parse_double(parts[1]),
                   static_cast<std::size_t>(text::parse_int(parts[2]))});
  }
  return out;
}

inline SplitRatios parse_ratios(const std::string& s) {
  const auto v = text::parse_double_list(s);
  if (v.size() != 3) throw UsageError("--split needs three comma-separated ratios");
  return {v[0], v[1], v[2]};
}

inline std::vector<int> parse_hidden(const std::string& s) {
  std::vector<int> out;
  for (auto part : text::split(s, ',')) out.push_back(static_cast<int>(text::parse_int(part)));
  return out;
}

/// Options shared by the subcommands that train models.
struct TrainOptions {
  std::string data;
  std::string mode = "percentile";
  std::optional<double> delta;
  double beta = 1.0;
  double gamma = 1.0;
  std::optional<double> epsilon;
  std::uint64_t seed = 1;
  std::size_t batch_size = 256;
  std::string schedule = "desk";
  std::string hidden = "64,32";
  bool no_warmup = false;
  double trim = 0.05;
  std::string split = "0.8,0.1,0.1";
  std::uint64_t split_seed = 11;

  void add_to(CLI::App* app, bool with_delta_epsilon = true) {
    app->add_option("--data", data, "transactions CSV")->group(detail::kRequiredGroup);
    app->add_option("--mode", mode, "objective mode")->check(CLI::IsMember({"percentile", "threshold"}));
    if (with_delta_epsilon) {
      app->add_option("--delta", delta, "minimum positive fraction (default 0.5 percentile, 0.1 threshold)");
      app->add_option("--epsilon", epsilon, "log-price error bound, required in threshold mode");
    }
    app->add_option("--beta", beta, "weight of the coverage hinge");
    app->add_option("--gamma", gamma, "weight of the cross-entropy term (threshold mode)");
    app->add_option("--seed", seed, "training seed");
    app->add_option("--batch-size", batch_size, "mini-batch size");
    app->add_option("--schedule", schedule, "desk | reference | stage:lr:epochs;...");
    app->add_option("--hidden", hidden, "hidden layer sizes, comma separated");
    app->add_flag("--no-warmup", no_warmup, "make every phase joint");
    app->add_option("--trim", trim, "outlier fraction removed before splitting");
    app->add_option("--split", split, "train,validation,test ratios");
    app->add_option("--split-seed", split_seed, "seed of the train/validation/test shuffle");
  }

  ObjectiveMode objective_mode() const { return mode == "threshold" ? ObjectiveMode::Threshold : ObjectiveMode::Percentile; }

  TrainConfig config(bool require_epsilon = true) const {
    TrainConfig cfg;
    auto& o = cfg.objective;
    o.mode = objective_mode();
    o.delta = delta.value_or(o.mode == ObjectiveMode::Percentile ? 0.5 : 0.1);
    o.beta = beta;
    o.gamma = gamma;
    if (o.mode == ObjectiveMode::Threshold) {
      if (!epsilon && require_epsilon) throw UsageError("--epsilon is required in threshold mode");
      o.epsilon = epsilon.value_or(0.5);
    } else if (epsilon) {
      o.epsilon = *epsilon;
    }
    cfg.seed = seed;
    cfg.batch_size = batch_size;
    cfg.schedule = parse_schedule(schedule);
    if (no_warmup) cfg.schedule = without_warmup(cfg.schedule);
    cfg.hidden_dims = parse_hidden(hidden);
    return cfg;
  }

  PreparedData load() const {
    return prepare(load_transactions(data), trim, parse_ratios(split), split_seed);
  }
};

namespace detail {

inline std::string normalize_key(std::string key) {
  for (auto& ch : key) {
    if (ch == '_') ch = '-';
  }
  return key;
}

/// Fills options that were not given on the command line from key=value files.
inline void apply_config(CLI::App* app, const std::string& path) {
  const auto kv = parse_key_values(text::read_file(path));
  for (const auto& [raw_key, value] : kv) {
    const std::string key = normalize_key(raw_key);
    if (key == "config") throw UsageError("config files cannot include other config files");
    CLI::Option* opt = app->get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError("unknown config key '" + raw_key + "' in " + path);
    if (opt->count() > 0) continue;
    if (opt->get_type_size() == 0) {
      if (value != "true" && value != "false" && value != "1" && value != "0") {
        throw UsageError("flag '" + raw_key + "' needs true/false");
      }
      if (value == "false" || value == "0") continue;
      opt->add_result("true");
    } else {
      opt->add_result(value);
    }
    opt->run_callback();
  }
}

inline std::atomic<httplib::Server*> g_server{nullptr};

extern "C" inline void stop_server(int) {
  if (auto* s = g_server.load()) s->stop();
}

inline std::string opt_str(const std::optional<double>& v) {
  if (!v) return "absent";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

inline void print_report(std::ostream& out, const std::string& label, const GateReport& r) {
  out << label << ": n_total=" << r.n_total << " n_positive=" << r.n_positive
      << " positive_fraction=" << text::format_shortest(r.positive_fraction) << " male=" << opt_str(r.male)
      << " rmsle=" << opt_str(r.rmsle) << "\n";
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Gate-then-price: joint qualification classifier and log-price regressor"};
  app.require_subcommand(1);
  std::string config_path;

  // synth
  SynthConfig synth_cfg;
  std::string synth_out;
  std::string synth_name = "synth";
  auto* synth = app.add_subcommand("synth", "generate a synthetic marketplace with ground-truth flags");
  synth->add_option("--n", synth_cfg.n, "number of listings");
  synth->add_option("--d-v", synth_cfg.visual_dim, "visual feature dimension");
  synth->add_option("--noise-fraction", synth_cfg.noise_fraction, "fraction of unqualified listings");
  synth->add_option("--noise-sigma", synth_cfg.noise_sigma, "log-price noise of qualified listings");
  synth->add_option("--n-sellers", synth_cfg.n_sellers, "number of sellers");
  synth->add_option("--n-categories", synth_cfg.n_categories, "number of categories (<= 13)");
  synth->add_option("--clarity-spread", synth_cfg.clarity_spread, "max washed-out share of qualified features");
  synth->add_option("--seed", synth_cfg.seed, "generator seed");
  synth->add_option("--name", synth_name, "file stem");
  synth->add_option("--out", synth_out, "output directory")->group(detail::kRequiredGroup);

  // stats
  std::string stats_data;
  std::string stats_out;
  double stats_trim = 0.05;
  auto* stats = app.add_subcommand("stats", "trim outliers and write the historical price statistics");
  stats->add_option("--data", stats_data, "transactions CSV")->group(detail::kRequiredGroup);
  stats->add_option("--trim", stats_trim, "outlier fraction");
  stats->add_option("--out", stats_out, "statistics file")->group(detail::kRequiredGroup);

  // train
  TrainOptions train_opts;
  std::string train_out;
  std::string train_log;
  auto* train_cmd = app.add_subcommand("train", "train the gate and the regressor");
  train_opts.add_to(train_cmd);
  train_cmd->add_option("--out", train_out, "checkpoint path")->group(detail::kRequiredGroup);
  train_cmd->add_option("--log", train_log, "epoch log CSV (default <out>.log.csv)");

  // eval
  std::string eval_ckpt;
  std::string eval_data;
  std::string eval_truth;
  std::string eval_subset = "test";
  double eval_trim = 0.05;
  std::string eval_split = "0.8,0.1,0.1";
  std::uint64_t eval_split_seed = 11;
  auto* eval_cmd = app.add_subcommand("eval", "gate report of a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path")->group(detail::kRequiredGroup);
  eval_cmd->add_option("--data", eval_data, "transactions CSV")->group(detail::kRequiredGroup);
  eval_cmd->add_option("--truth", eval_truth, "ground-truth sidecar for gate AUC");
  eval_cmd->add_option("--subset", eval_subset, "which split to evaluate")
      ->check(CLI::IsMember({"train", "validation", "test", "all"}));
  eval_cmd->add_option("--trim", eval_trim, "outlier fraction (must match training)");
  eval_cmd->add_option("--split", eval_split, "ratios (must match training)");
  eval_cmd->add_option("--split-seed", eval_split_seed, "split seed (must match training)");

  // sweep
  TrainOptions sweep_opts;
  std::string sweep_values = "0.3,0.4,0.5,0.6,0.7";
  std::string sweep_format = "csv";
  std::string sweep_out;
  auto* sweep_cmd = app.add_subcommand("sweep", "train and evaluate once per constraint value");
  sweep_opts.add_to(sweep_cmd);
  sweep_cmd->add_option("--values", sweep_values, "delta values (percentile) or epsilon values (threshold)");
  sweep_cmd->add_option("--format", sweep_format, "csv | table")->check(CLI::IsMember({"csv", "table"}));
  sweep_cmd->add_option("--out", sweep_out, "write the report here instead of stdout");

  // predict
  std::string predict_ckpt;
  std::string predict_features;
  std::string predict_request;
  int predict_category = kMinCategory;
  std::string predict_seller;
  bool predict_pretty = false;
  auto* predict_cmd = app.add_subcommand("predict", "price suggestion for one listing");
  predict_cmd->add_option("--checkpoint", predict_ckpt, "checkpoint path")->group(detail::kRequiredGroup);
  predict_cmd->add_option("--request", predict_request, "JSON request file (same body as POST /v1/price)");
  predict_cmd->add_option("--features", predict_features, "visual features, comma separated");
  predict_cmd->add_option("--category", predict_category, "category id 1..13");
  predict_cmd->add_option("--seller", predict_seller, "seller id");
  predict_cmd->add_flag("--pretty", predict_pretty, "human-readable output with the price rounded to cents");

  // serve
  std::string serve_ckpt;
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP price suggestion service");
  serve_cmd->add_option("--checkpoint", serve_ckpt, "checkpoint path")->group(detail::kRequiredGroup);
  serve_cmd->add_option("--host", serve_host, "bind address");
  serve_cmd->add_option("--port", serve_port, "bind port");

  for (auto* sub : app.get_subcommands({})) sub->add_option("--config", config_path, "key=value defaults file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    if (config_path.empty()) {
      if (const char* env = std::getenv("GATED_PRICE_CONFIG"); env != nullptr && *env) config_path = env;
    }
    if (!config_path.empty()) detail::apply_config(sub, config_path);
    detail::check_required(sub);

    if (sub == synth) {
      std::filesystem::create_directories(synth_out);
      const auto data = generate(synth_cfg);
      const auto [csv, truth] = save_synth(data, synth_out, synth_name);
      out << "wrote " << csv << " and " << truth << " (" << data.table.size() << " rows, "
          << unqualified_count(synth_cfg) << " unqualified)\n";
    } else if (sub == stats) {
      const auto raw = load_transactions(stats_data);
      const auto trimmed = trim_outliers(raw, stats_trim);
      save_stat_index(build_stat_index(trimmed), stats_out);
      std::vector<double> prices;
      std::vector<double> logs;
      for (const auto& r : trimmed.rows) {
        prices.push_back(r.sold_price);
        logs.push_back(log_transform(r.sold_price));
      }
      out << "rows " << raw.size() << " -> " << trimmed.size() << " after trimming\n";
      if (prices.size() >= 3) {
        out << "skewness raw=" << skewness(prices) << " log=" << skewness(logs) << "\n";
      }
      out << "wrote " << stats_out << "\n";
    } else if (sub == train_cmd) {
      const auto cfg = train_opts.config();
      const auto data = train_opts.load();
      auto result = train(data.examples.train, data.examples.validation, cfg, data.index);
      save_checkpoint(result.checkpoint, train_out);
      const std::string log_path = train_log.empty() ? train_out + ".log.csv" : train_log;
      text::write_file(log_path, serialize_epoch_log(result.log));
      out << "trained " << cfg.total_epochs() << " epochs on " << data.examples.train.size() << " examples\n";
      if (!data.examples.validation.empty()) {
        detail::print_report(out, "validation", gate_report(result.checkpoint, data.examples.validation));
      }
      out << "wrote " << train_out << " (" << model_version(result.checkpoint) << ") and " << log_path << "\n";
    } else if (sub == eval_cmd) {
      const auto ckpt = load_checkpoint(eval_ckpt);
      const auto raw = load_transactions(eval_data);
      std::vector<ListingExample> examples;
      if (eval_subset == "all") {
        examples = assemble(raw, ckpt.stats);
      } else {
        const auto parts = split(trim_outliers(raw, eval_trim).rows, parse_ratios(eval_split), eval_split_seed);
        const auto& rows = eval_subset == "train" ? parts.train : (eval_subset == "validation" ? parts.validation : parts.test);
        examples = assemble(TransactionTable{rows}, ckpt.stats);
      }
      detail::print_report(out, "gated", gate_report(ckpt, examples));
      detail::print_report(out, "ungated", ungated_report(ckpt, examples));
      if (!eval_truth.empty()) {
        out << "gate_auc=" << text::format_shortest(gate_auc(ckpt, examples, parse_truth(text::read_file(eval_truth))))
            << "\n";
      }
    } else if (sub == sweep_cmd) {
      const auto values = text::parse_double_list(sweep_values);
      const auto cfg = sweep_opts.config(/*require_epsilon=*/false);
      const auto rows = sweep(sweep_opts.load(), cfg, values);
      const auto report = sweep_format == "table" ? sweep_table(rows, cfg.objective.mode) : sweep_csv(rows);
      if (sweep_out.empty()) {
        out << report;
      } else {
        text::write_file(sweep_out, report);
        out << "wrote " << sweep_out << "\n";
      }
    } else if (sub == predict_cmd) {
      const auto ckpt = load_checkpoint(predict_ckpt);
      PriceRequest req;
      if (!predict_request.empty()) {
        try {
          req = parse_price_request(text::read_file(predict_request));
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::IoError) throw;
          throw UsageError(e.what());
        }
      } else {
        if (predict_seller.empty()) throw UsageError("--seller is required without --request");
        req.visual_features = text::parse_double_list(predict_features);
        req.category_id = predict_category;
        req.seller_id = predict_seller;
      }
      const auto resp = predict(ckpt, req);
      if (predict_pretty) {
        char buf[128];
        if (resp.suggested_price) {
          std::snprintf(buf, sizeof(buf), "qualified (score %.4f): suggested price %.2f\n", resp.score, *resp.suggested_price);
        } else {
          std::snprintf(buf, sizeof(buf), "not qualified (score %.4f): no price suggestion\n", resp.score);
        }
        out << buf;
      } else {
        out << to_json(resp, ckpt).dump() << "\n";
      }
    } else if (sub == serve_cmd) {
      const auto ckpt = load_checkpoint(serve_ckpt);
      auto server = make_server(ckpt);
      if (!server->bind_to_port(serve_host, serve_port)) {
        fail(ErrorKind::BindFailure, "cannot bind " + serve_host + ":" + std::to_string(serve_port));
      }
      detail::g_server = server.get();
      std::signal(SIGINT, detail::stop_server);
      std::signal(SIGTERM, detail::stop_server);
      out << "serving " << model_version(ckpt) << " on " << serve_host << ":" << serve_port << std::endl;
      server->listen_after_bind();
      detail::g_server = nullptr;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace gprice::cli
