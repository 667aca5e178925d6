#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "gated_price/checkpoint.hpp"
#include "gated_price/cli.hpp"
#include "gated_price/service.hpp"

using namespace gprice;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "gated-price");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// One synthetic corpus and one trained checkpoint shared by every test.
class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(fs::temp_directory_path() / "gprice_service_test");
    fs::remove_all(*dir_);
    fs::create_directories(*dir_);
    const auto synth = run({"synth", "--n", "1500", "--d-v", "6", "--n-sellers", "20", "--seed", "4", "--out", dir_->string()});
    ASSERT_EQ(synth.code, 0) << synth.err;
    const auto train = run({"train", "--data", path("synth.csv"), "--out", path("m.ckpt"), "--schedule",
                            "warmup:0.002:4;joint:0.002:6", "--hidden", "12,6", "--delta", "0.6"});
    ASSERT_EQ(train.code, 0) << train.err;
    ckpt_ = new Checkpoint(load_checkpoint(path("m.ckpt")));
  }
  static void TearDownTestSuite() {
    delete ckpt_;
    fs::remove_all(*dir_);
    delete dir_;
  }
  static std::string path(const std::string& name) { return (*dir_ / name).string(); }

  static nlohmann::json request_for(std::size_t row) {
    const auto table = load_transactions(path("synth.csv"));
    const auto& r = table.rows.at(row);
    return {{"visual_features", r.visual_features}, {"category_id", r.category_id}, {"seller_id", r.seller_id}};
  }

  static fs::path* dir_;
  static Checkpoint* ckpt_;
};

fs::path* ServiceTest::dir_ = nullptr;
Checkpoint* ServiceTest::ckpt_ = nullptr;

}  // namespace

TEST_F(ServiceTest, TrainWroteLogAndCheckpoint) {
  EXPECT_TRUE(fs::exists(path("m.ckpt.log.csv")));
  EXPECT_TRUE(fs::exists(path("synth.truth.csv")));
  EXPECT_EQ(ckpt_->config.objective.delta, 0.6);
  EXPECT_EQ(ckpt_->visual_dim, 6u);
}

TEST_F(ServiceTest, PredictFollowsTheGate) {
  auto c = *ckpt_;
  PriceRequest req{std::vector<double>(6, 0.1), 2, "s1"};
  // force the classifier output through its last bias
  c.classifier.biases.back()(0) = 50.0;
  auto r = predict(c, req);
  EXPECT_TRUE(r.qualified);
  ASSERT_TRUE(r.suggested_price.has_value());
  EXPECT_GT(*r.suggested_price, 0.0);
  c.classifier.biases.back()(0) = -50.0;
  r = predict(c, req);
  EXPECT_FALSE(r.qualified);
  EXPECT_FALSE(r.suggested_price.has_value());
  EXPECT_FALSE(to_json(r, c).contains("suggested_price"));
}

TEST_F(ServiceTest, PriceIsExpOfRegressorOutput) {
  auto c = *ckpt_;
  c.classifier.biases.back()(0) = 50.0;
  c.regressor.weights.back().setZero();
  c.regressor.biases.back()(0) = 4.60517;
  const auto r = predict(c, {std::vector<double>(6, 0.0), 1, "unknown-seller"});
  EXPECT_NEAR(*r.suggested_price, 100.0, 1e-3);
}

TEST_F(ServiceTest, UnseenSellerStillPriced) {
  EXPECT_NO_THROW(predict(*ckpt_, {std::vector<double>(6, 0.2), 5, "never-seen"}));
}

TEST_F(ServiceTest, BadRequests) {
  EXPECT_EQ(handle_price_request(*ckpt_, "{not json").status, 400);
  EXPECT_EQ(handle_price_request(*ckpt_, R"({"visual_features":[1,2]})").status, 400);
  EXPECT_EQ(handle_price_request(*ckpt_, R"({"visual_features":[1,"a"],"category_id":1,"seller_id":"s"})").status, 400);
  EXPECT_EQ(handle_price_request(*ckpt_, R"({"visual_features":[1,2,3,4,5,6],"category_id":99,"seller_id":"s"})").status,
            400);
  EXPECT_EQ(handle_price_request(*ckpt_, R"({"visual_features":[1,2,3],"category_id":1,"seller_id":"s"})").status, 422);
  EXPECT_EQ(handle_price_request(*ckpt_, R"({"visual_features":[1,2,3,4,5,6],"category_id":1,"seller_id":"s"})").status,
            200);
}

TEST_F(ServiceTest, HealthReportsTheFileCrc) {
  const auto bytes = text::read_file(path("m.ckpt"));
  const auto stored = static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[bytes.size() - 4])) |
                      static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[bytes.size() - 3])) << 8 |
                      static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[bytes.size() - 2])) << 16 |
                      static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[bytes.size() - 1])) << 24;
  const auto j = nlohmann::json::parse(handle_health(*ckpt_).body);
  EXPECT_EQ(j["status"], "ok");
  EXPECT_EQ(j["checkpoint_crc"], crc_hex(stored));
  EXPECT_EQ(stored, crc32(std::string_view(bytes).substr(0, bytes.size() - 4)));
}

TEST_F(ServiceTest, CliAndHttpAgreeExactly) {
  auto server = make_server(*ckpt_);
  const int port = server->bind_to_any_port("127.0.0.1");
  ASSERT_GT(port, 0);
  std::thread t([&] { server->listen_after_bind(); });
  server->wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  const auto health = client.Get("/v1/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(nlohmann::json::parse(health->body)["checkpoint_crc"], crc_hex(*ckpt_->crc));

  for (std::size_t row : {0u, 7u, 33u, 120u, 500u}) {
    const auto req = request_for(row);
    text::write_file(path("req.json"), req.dump());
    const auto via_file = run({"predict", "--checkpoint", path("m.ckpt"), "--request", path("req.json")});
    ASSERT_EQ(via_file.code, 0) << via_file.err;
    std::vector<double> f = req["visual_features"];
    const auto via_flags = run({"predict", "--checkpoint", path("m.ckpt"), "--features", text::join_g17(f), "--category",
                                std::to_string(req["category_id"].get<int>()), "--seller", req["seller_id"]});
    ASSERT_EQ(via_flags.code, 0) << via_flags.err;
    const auto http = client.Post("/v1/price", req.dump(), "application/json");
    ASSERT_TRUE(http);
    EXPECT_EQ(http->status, 200);
    EXPECT_EQ(via_file.out, http->body + "\n");
    EXPECT_EQ(via_flags.out, http->body + "\n");
  }

  const auto wrong_dim = client.Post("/v1/price", R"({"visual_features":[1],"category_id":1,"seller_id":"s"})",
                                     "application/json");
  ASSERT_TRUE(wrong_dim);
  EXPECT_EQ(wrong_dim->status, 422);
  const auto malformed = client.Post("/v1/price", "visual_features=1", "application/json");
  ASSERT_TRUE(malformed);
  EXPECT_EQ(malformed->status, 400);

  server->stop();
  t.join();
}

TEST_F(ServiceTest, EvalPrintsReports) {
  const auto r = run({"eval", "--checkpoint", path("m.ckpt"), "--data", path("synth.csv"), "--truth",
                      path("synth.truth.csv")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("gated: n_total="), std::string::npos);
  EXPECT_NE(r.out.find("gate_auc="), std::string::npos);
}

TEST_F(ServiceTest, UsageErrors) {
  EXPECT_EQ(run({}).code, cli::kExitUsage);
  EXPECT_EQ(run({"train", "--data", path("synth.csv"), "--out", path("x"), "--mode", "threshold", "--delta", "0.5"}).code,
            cli::kExitUsage);
  EXPECT_EQ(run({"train", "--data", path("synth.csv"), "--out", path("x"), "--mode", "bogus"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"predict", "--checkpoint", path("m.ckpt"), "--features", "1,2"}).code, cli::kExitUsage);
  EXPECT_EQ(run({"eval", "--checkpoint", path("missing.ckpt"), "--data", path("synth.csv")}).code, cli::kExitRuntime);
}

TEST_F(ServiceTest, ConfigFileFillsMissingFlags) {
  text::write_file(path("stats.cfg"), "# defaults\ntrim=0.1\nout=" + path("from_cfg.txt") + "\n");
  auto r = run({"stats", "--data", path("synth.csv"), "--config", path("stats.cfg")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1500 -> 1350"), std::string::npos) << r.out;
  EXPECT_TRUE(fs::exists(path("from_cfg.txt")));

  // the command line wins
  r = run({"stats", "--data", path("synth.csv"), "--trim", "0", "--config", path("stats.cfg")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("1500 -> 1500"), std::string::npos) << r.out;

  text::write_file(path("bad.cfg"), "no_such_option=1\n");
  EXPECT_EQ(run({"stats", "--data", path("synth.csv"), "--out", path("y"), "--config", path("bad.cfg")}).code,
            cli::kExitUsage);
}

TEST_F(ServiceTest, SweepTableOutput) {
  const auto r = run({"sweep", "--data", path("synth.csv"), "--schedule", "warmup:0.002:2;joint:0.002:2", "--hidden", "8",
                      "--values", "0.4,0.6", "--format", "table"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("% positive items"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("40"), std::string::npos);
}
