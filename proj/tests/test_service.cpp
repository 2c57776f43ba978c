/*
 * Copyright 2026 The fluidrx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <unistd.h>

#include "fluidrx/service.hpp"

namespace fluidrx {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

const std::string kDemo = std::string(FLUIDRX_TEST_DATA_DIR) + "/demo";
const std::string kGolden = std::string(FLUIDRX_TEST_DATA_DIR) + "/golden";

std::string ReadFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string DemoBundleText() { return BundleToJson(LoadBundle(kDemo + "/bundle.json")).dump(); }
json DemoRequest() { return json::parse(ReadFile(kDemo + "/request.json")); }

// A scratch directory removed on scope exit.
struct TempDir {
  fs::path path;
  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("fluidrx_service_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string Registered(BundleRegistry& reg) {
  const ApiResponse r = HandlePostBundle(reg, DemoBundleText());
  EXPECT_EQ(r.status, 201) << r.body.dump();
  return r.body["id"].get<std::string>();
}

// Raw-unit request for one normalized test row.
json RawRequestForRow(const ModelBundle& b, const Dataset& ds, std::size_t row, double budget) {
  json body = {{"x_u", json::object()}, {"x_i", json::object()}, {"x_d", json::object()}, {"budget", budget}};
  auto fill = [&](const char* key, const std::vector<std::size_t>& block) {
    for (std::size_t j : block) {
      body[key][b.meta[j].name] =
          b.scaler.Unscale(j, ds.features(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)));
    }
  };
  fill("x_u", b.partition.u_indices);
  fill("x_i", b.partition.i_indices);
  fill("x_d", b.partition.d_indices);
  return body;
}

// ---------------------------------------------------------------------------
// Registry handlers

TEST(Bundles, PostReturns201WithFreshIds) {
  BundleRegistry reg;
  const std::string a = Registered(reg);
  const std::string b = Registered(reg);
  EXPECT_FALSE(a.empty());
  EXPECT_NE(a, b);
  EXPECT_EQ(reg.size(), 2u);
  EXPECT_EQ(HandleGetBundle(reg, a, false).status, 200);
  EXPECT_EQ(HandleGetBundle(reg, b, false).status, 200);
}

TEST(Bundles, FeatureNameMismatchIs400WithField) {
  BundleRegistry reg;
  json j = json::parse(DemoBundleText());
  j["classifier"]["feature_names"][0] = "not_a_feature";
  const ApiResponse r = HandlePostBundle(reg, j.dump());
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["code"], "InconsistentBundle");
  EXPECT_EQ(r.body["error"]["field"], "classifier.feature_names");
  EXPECT_EQ(reg.size(), 0u);
}

TEST(Bundles, IfeOutputMismatchIs400WithField) {
  BundleRegistry reg;
  json j = json::parse(DemoBundleText());
  j["ife"]["output_names"][0] = "not_a_feature";
  const ApiResponse r = HandlePostBundle(reg, j.dump());
  EXPECT_EQ(r.status, 400);
  ASSERT_TRUE(r.body["error"].contains("field"));
  EXPECT_EQ(r.body["error"]["field"].get<std::string>().rfind("ife.", 0), 0u) << r.body.dump();
}

TEST(Bundles, MalformedBodyIs400) {
  BundleRegistry reg;
  EXPECT_EQ(HandlePostBundle(reg, "{not json").status, 400);
  EXPECT_EQ(HandlePostBundle(reg, "[]").status, 400);
  EXPECT_EQ(HandlePostBundle(reg, R"({"features": []})").status, 400);
}

TEST(Bundles, UnknownIdIs404Everywhere) {
  BundleRegistry reg;
  const ServiceOptions opt;
  const std::string body = DemoRequest().dump();
  EXPECT_EQ(HandleGetBundle(reg, "bundle-404", false).status, 404);
  EXPECT_EQ(HandleDeleteBundle(reg, "bundle-404").status, 404);
  EXPECT_EQ(HandleRecommend(reg, "bundle-404", body, opt).status, 404);
  EXPECT_EQ(HandleSweep(reg, "bundle-404", R"({"budgets":[0.1],"request":{}})", opt).status, 404);
  EXPECT_EQ(HandleGetBundle(reg, "bundle-404", false).body["error"]["code"], "NotFound");
}

TEST(Bundles, ListAfterOnePostHasLengthOne) {
  BundleRegistry reg;
  EXPECT_EQ(HandleListBundles(reg).body["bundles"].size(), 0u);
  const std::string id = Registered(reg);
  const ApiResponse r = HandleListBundles(reg);
  ASSERT_EQ(r.body["bundles"].size(), 1u);
  EXPECT_EQ(r.body["bundles"][0]["id"], id);
}

TEST(Bundles, MetadataOmitsWeightsUnlessFull) {
  BundleRegistry reg;
  const std::string id = Registered(reg);
  const json meta = HandleGetBundle(reg, id, false).body;
  EXPECT_FALSE(meta.contains("bundle"));
  EXPECT_EQ(meta.dump().find("\"weights\""), std::string::npos);
  EXPECT_EQ(meta["partition"]["d"].size(), 9u);
  EXPECT_EQ(meta["features"].size(), 39u);
}

TEST(Bundles, FullRoundTripsPostedModelsByteForByte) {
  BundleRegistry reg;
  const std::string posted = DemoBundleText();
  const std::string id = HandlePostBundle(reg, posted).body["id"];
  const json full = HandleGetBundle(reg, id, true).body["bundle"];
  const json sent = json::parse(posted);
  for (const char* key : {"features", "scaler", "classifier", "ife", "metadata"}) {
    EXPECT_EQ(full[key].dump(), sent[key].dump()) << key;
  }
  EXPECT_EQ(full["id"], id);
}

TEST(Bundles, DeleteRemoves) {
  BundleRegistry reg;
  const std::string id = Registered(reg);
  EXPECT_EQ(HandleDeleteBundle(reg, id).status, 200);
  EXPECT_EQ(HandleGetBundle(reg, id, false).status, 404);
  EXPECT_EQ(HandleDeleteBundle(reg, id).status, 404);
}

TEST(Bundles, PersistenceSurvivesRestart) {
  TempDir dir;
  std::string id, second;
  std::string before;
  {
    BundleRegistry reg(dir.path);
    id = Registered(reg);
    before = HandleGetBundle(reg, id, true).body.dump();
  }
  {
    BundleRegistry reg(dir.path);
    ASSERT_EQ(reg.size(), 1u);
    EXPECT_EQ(HandleGetBundle(reg, id, true).body.dump(), before);
    second = Registered(reg);
    EXPECT_NE(second, id);
    EXPECT_EQ(HandleDeleteBundle(reg, id).status, 200);
  }
  BundleRegistry reg(dir.path);
  EXPECT_EQ(reg.size(), 1u);
  EXPECT_EQ(HandleGetBundle(reg, second, false).status, 200);
  EXPECT_EQ(HandleGetBundle(reg, id, false).status, 404);
}

// ---------------------------------------------------------------------------
// Recommend

TEST(Recommend, ZeroBudgetReturnsZeroDeltas) {
  BundleRegistry reg;
  const std::string id = Registered(reg);
  json body = DemoRequest();
  body["budget"] = 0.0;
  const ApiResponse r = HandleRecommend(reg, id, body.dump(), {});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  for (const auto& f : r.body["fluids"]) {
    EXPECT_EQ(f["delta"].get<double>(), 0.0);
    EXPECT_EQ(f["delta_normalized"].get<double>(), 0.0);
    EXPECT_EQ(f["recommended"].get<double>(), body["x_d"][f["name"].get<std::string>()].get<double>());
  }
  EXPECT_EQ(r.body["prob_after"], r.body["objective_before"]);
}

TEST(Recommend, BudgetHalfMatchesGoldenFile) {
  BundleRegistry reg;
  const std::string id = Registered(reg);
  ASSERT_EQ(id, "bundle-000001");
  const ApiResponse r = HandleRecommend(reg, id, ReadFile(kDemo + "/request.json"), {});
  ASSERT_EQ(r.status, 200);
  EXPECT_EQ(r.body.dump(2) + "\n", ReadFile(kGolden + "/recommend_b05.json"));
}

TEST(Recommend, ResponseUnitsAreConsistent) {
  BundleRegistry reg;
  const std::string id = Registered(reg);
  const auto b = reg.Get(id);
  const json body = DemoRequest();
  const json r = HandleRecommend(reg, id, body.dump(), {}).body;
  double l1 = 0.0;
  for (std::size_t k = 0; k < b->partition.d_indices.size(); ++k) {
    const FeatureRange& range = b->scaler.ranges()[b->partition.d_indices[k]];
    const json& f = r["fluids"][k];
    EXPECT_EQ(f["name"], range.name);
    const double raw = body["x_d"][range.name].get<double>();
    EXPECT_NEAR(f["physician_normalized"].get<double>(), (raw - range.min) / (range.max - range.min), 1e-15);
    EXPECT_NEAR(f["delta"].get<double>(), f["delta_normalized"].get<double>() * (range.max - range.min), 1e-9);
    EXPECT_GE(f["recommended"].get<double>(), range.min - 1e-9);
    EXPECT_LE(f["recommended"].get<double>(), range.max + 1e-9);
    l1 += std::abs(f["delta_normalized"].get<double>());
  }
  EXPECT_LE(l1, 0.5 + 1e-9);
  EXPECT_LE(r["prob_after"].get<double>(), r["objective_before"].get<double>());
}

TEST(Recommend, ValidationErrors) {
  BundleRegistry reg;
  const std::string id = Registered(reg);
  auto call = [&](const json& body) { return HandleRecommend(reg, id, body.dump(), {}); };

  json neg = DemoRequest();
  neg["budget"] = -0.1;
  ApiResponse r = call(neg);
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["field"], "budget");

  json missing = DemoRequest();
  missing["x_d"].erase("NS");
  r = call(missing);
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["field"], "x_d.NS");

  json extra = DemoRequest();
  extra["x_i"]["not_a_lab"] = 1.0;
  r = call(extra);
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["field"], "x_i.not_a_lab");

  json wrong_block = DemoRequest();
  wrong_block["x_u"]["NS"] = 1.0;
  EXPECT_EQ(call(wrong_block).status, 400);

  json range = DemoRequest();
  range["x_d"]["LR"] = 1e9;
  r = call(range);
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["field"], "x_d.LR");

  json text = DemoRequest();
  text["x_u"]["age"] = "old";
  r = call(text);
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["field"], "x_u.age");

  json no_budget = DemoRequest();
  no_budget.erase("budget");
  EXPECT_EQ(call(no_budget).status, 400);

  EXPECT_EQ(HandleRecommend(reg, id, "{", {}).status, 400);
}

TEST(Recommend, NonFiniteInputsAre422) {
  BundleRegistry reg;
  const std::string id = Registered(reg);
  for (const char* token : {"NaN", "inf", "-Infinity"}) {
    json body = DemoRequest();
    body["x_i"]["lactate"] = token;
    const ApiResponse r = HandleRecommend(reg, id, body.dump(), {});
    EXPECT_EQ(r.status, 422) << token;
    EXPECT_EQ(r.body["error"]["field"], "x_i.lactate");
  }
  json budget = DemoRequest();
  budget["budget"] = "nan";
  EXPECT_EQ(HandleRecommend(reg, id, budget.dump(), {}).status, 422);
}

// The handler must add nothing numerically: its normalized block equals a
// direct library call on the same scaled request, bit for bit.
TEST(Recommend, ThinAdapterMatchesDirectLibraryCall) {
  BundleRegistry reg;
  const std::string id = Registered(reg);
  const auto b = reg.Get(id);
  const Dataset test = LoadCsv(kDemo + "/test.csv", b->meta);
  const ServiceOptions opt;
  for (std::size_t row = 0; row < 20; ++row) {
    const json body = RawRequestForRow(*b, test, row, 0.05 * static_cast<double>(row));
    const ApiResponse r = HandleRecommend(reg, id, body.dump(), opt);
    ASSERT_EQ(r.status, 200) << r.body.dump();

    // Independent scaling of the raw request.
    RecommendationRequest req;
    auto scale = [&](const char* key, const std::vector<std::size_t>& block) {
      Eigen::VectorXd v(static_cast<Eigen::Index>(block.size()));
      for (std::size_t k = 0; k < block.size(); ++k) {
        const FeatureRange& rg = b->scaler.ranges()[block[k]];
        const double x = body[key][rg.name].get<double>();
        v(static_cast<Eigen::Index>(k)) = std::clamp((x - rg.min) / (rg.max - rg.min), 0.0, 1.0);
      }
      return v;
    };
    req.x_u = scale("x_u", b->partition.u_indices);
    req.x_i_observed = scale("x_i", b->partition.i_indices);
    req.x_d_physician = scale("x_d", b->partition.d_indices);
    req.budget = body["budget"].get<double>();
    const RecommendationResult direct = OptimizeRecommendation(b->classifier, b->ife, req, opt.optimize);
    EXPECT_EQ(r.body["normalized"].dump(), ResultToJson(direct, true).dump()) << "row " << row;
    EXPECT_EQ(r.body["request_normalized"].dump(), RequestToJson(req).dump()) << "row " << row;
  }
}

TEST(Recommend, ConcurrentCallsMatchSerial) {
  BundleRegistry reg;
  const std::string id = Registered(reg);
  const auto b = reg.Get(id);
  const Dataset test = LoadCsv(kDemo + "/test.csv", b->meta);
  constexpr std::size_t kRequests = 24;
  std::vector<std::string> bodies, serial(kRequests), parallel(kRequests);
  for (std::size_t i = 0; i < kRequests; ++i) bodies.push_back(RawRequestForRow(*b, test, i, 0.4).dump());
  for (std::size_t i = 0; i < kRequests; ++i) serial[i] = HandleRecommend(reg, id, bodies[i], {}).body.dump();

  std::vector<std::thread> workers;
  std::atomic<std::size_t> next{0};
  for (int t = 0; t < 6; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < kRequests; i = next++) {
        parallel[i] = HandleRecommend(reg, id, bodies[i], {}).body.dump();
      }
    });
  }
  // A registry write in the middle must not disturb readers.
  Registered(reg);
  for (auto& w : workers) w.join();
  EXPECT_EQ(parallel, serial);
}

// ---------------------------------------------------------------------------
// Sweep

json SweepBody(std::vector<double> budgets) {
  json request = DemoRequest();
  request.erase("budget");
  return {{"budgets", budgets}, {"request", request}};
}

TEST(SweepEndpoint, ZeroBudgetIsSinglePointAtPredictedBaseline) {
  BundleRegistry reg;
  const std::string id = Registered(reg);
  const ApiResponse r = HandleSweep(reg, id, SweepBody({0.0}).dump(), {});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  ASSERT_EQ(r.body["points"].size(), 1u);
  EXPECT_EQ(r.body["points"][0]["prob_after"], r.body["objective_before"]);
  for (const auto& d : r.body["points"][0]["delta_normalized"]) EXPECT_EQ(d.get<double>(), 0.0);

  json single = DemoRequest();
  single["budget"] = 0.0;
  const json rec = HandleRecommend(reg, id, single.dump(), {}).body;
  EXPECT_EQ(r.body["objective_before"], rec["objective_before"]);
  EXPECT_EQ(r.body["prob_before"], rec["prob_before"]);
}

TEST(SweepEndpoint, NonIncreasingAcrossDefaultBudgets) {
  BundleRegistry reg;
  const std::string id = Registered(reg);
  const ApiResponse r = HandleSweep(reg, id, SweepBody(DefaultBudgets()).dump(), {});
  ASSERT_EQ(r.status, 200) << r.body.dump();
  const json& points = r.body["points"];
  ASSERT_EQ(points.size(), 10u);
  double previous = r.body["objective_before"].get<double>();
  for (const auto& p : points) {
    EXPECT_LE(p["prob_after"].get<double>(), previous + 1e-6) << p["budget"];
    previous = p["prob_after"].get<double>();
  }
}

TEST(SweepEndpoint, PointsMatchRecommendAtSameBudget) {
  BundleRegistry reg;
  const std::string id = Registered(reg);
  const json sweep = HandleSweep(reg, id, SweepBody({0.2}).dump(), {}).body;
  json single = DemoRequest();
  single["budget"] = 0.2;
  const json rec = HandleRecommend(reg, id, single.dump(), {}).body;
  EXPECT_EQ(sweep["points"][0]["prob_after"], rec["prob_after"]);
  EXPECT_EQ(sweep["points"][0]["delta_normalized"], rec["normalized"]["delta"]);
}

TEST(SweepEndpoint, Errors) {
  BundleRegistry reg;
  const std::string id = Registered(reg);
  ApiResponse r = HandleSweep(reg, id, SweepBody({}).dump(), {});
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"]["field"], "budgets");
  EXPECT_EQ(HandleSweep(reg, id, SweepBody({0.1, -1.0}).dump(), {}).status, 400);
  EXPECT_EQ(HandleSweep(reg, id, R"({"budgets": [0.1]})", {}).status, 400);
  EXPECT_EQ(HandleSweep(reg, id, R"({"budgets": 0.1, "request": {}})", {}).status, 400);
  json bad = SweepBody({0.1});
  bad["request"]["x_d"]["NS"] = "inf";
  EXPECT_EQ(HandleSweep(reg, id, bad.dump(), {}).status, 422);
}

// ---------------------------------------------------------------------------
// HTTP transport

class HttpService : public ::testing::Test {
 protected:
  void Start(std::size_t max_payload) {
    options_.max_payload_bytes = max_payload;
    MountRoutes(server_, registry_, options_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }
  httplib::Client Client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(std::chrono::seconds(60));
    return c;
  }

  BundleRegistry registry_;
  ServiceOptions options_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(HttpService, EndToEnd) {
  Start(16u << 20);
  auto c = Client();
  auto health = c.Get("/healthz");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);

  auto post = c.Post("/bundles", DemoBundleText(), "application/json");
  ASSERT_TRUE(post);
  EXPECT_EQ(post->status, 201);
  EXPECT_EQ(post->get_header_value("Content-Type"), "application/json");
  const std::string id = json::parse(post->body)["id"];

  auto list = c.Get("/bundles");
  ASSERT_TRUE(list);
  EXPECT_EQ(json::parse(list->body)["bundles"].size(), 1u);

  auto full = c.Get("/bundles/" + id + "?full=1");
  ASSERT_TRUE(full);
  EXPECT_EQ(json::parse(full->body)["bundle"]["classifier"].dump(),
            json::parse(DemoBundleText())["classifier"].dump());

  auto rec = c.Post("/bundles/" + id + "/recommend", ReadFile(kDemo + "/request.json"), "application/json");
  ASSERT_TRUE(rec);
  EXPECT_EQ(rec->status, 200);
  EXPECT_EQ(json::parse(rec->body).dump(2) + "\n", ReadFile(kGolden + "/recommend_b05.json"));

  auto sweep = c.Post("/bundles/" + id + "/sweep", SweepBody({0.1, 0.5}).dump(), "application/json");
  ASSERT_TRUE(sweep);
  EXPECT_EQ(sweep->status, 200);
  EXPECT_EQ(json::parse(sweep->body)["points"].size(), 2u);

  json bad = DemoRequest();
  bad["budget"] = -1;
  auto neg = c.Post("/bundles/" + id + "/recommend", bad.dump(), "application/json");
  ASSERT_TRUE(neg);
  EXPECT_EQ(neg->status, 400);
  EXPECT_EQ(json::parse(neg->body)["error"]["field"], "budget");

  auto missing = c.Get("/bundles/bundle-999999");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);

  auto no_route = c.Get("/nowhere");
  ASSERT_TRUE(no_route);
  EXPECT_EQ(no_route->status, 404);
  EXPECT_EQ(json::parse(no_route->body)["error"]["code"], "NotFound");

  auto del = c.Delete("/bundles/" + id);
  ASSERT_TRUE(del);
  EXPECT_EQ(del->status, 200);
  EXPECT_EQ(c.Get("/bundles/" + id)->status, 404);
}

TEST_F(HttpService, OversizedPayloadIs413) {
  Start(4096);
  auto c = Client();
  auto post = c.Post("/bundles", DemoBundleText(), "application/json");
  ASSERT_TRUE(post);
  EXPECT_EQ(post->status, 413);
  EXPECT_EQ(json::parse(post->body)["error"]["code"], "PayloadTooLarge");
  EXPECT_EQ(registry_.size(), 0u);
}

// The committed API description must cover every mounted route.
TEST(OpenApi, DocumentsEveryRoute) {
  const std::string doc = ReadFile(std::string(FLUIDRX_TEST_DATA_DIR) + "/../../api/openapi.yaml");
  ASSERT_FALSE(doc.empty());
  for (const char* path : {"  /healthz:", "  /bundles:", "  /bundles/{id}:", "  /bundles/{id}/recommend:",
                           "  /bundles/{id}/sweep:"}) {
    EXPECT_NE(doc.find(std::string("\n") + path + "\n"), std::string::npos) << path;
  }
  for (const char* status : {"\"201\"", "\"400\"", "\"404\"", "\"413\"", "\"422\""}) {
    EXPECT_NE(doc.find(status), std::string::npos) << status;
  }
  EXPECT_NE(doc.find("    delete:"), std::string::npos);
}

}  // namespace
}  // namespace fluidrx
