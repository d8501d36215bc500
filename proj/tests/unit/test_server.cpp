#include <doctest.h>

#include <thread>

#include <httplib.h>
#include <unistd.h>

#include "../support/service_harness.hpp"
#include "phishtrain/error.hpp"
#include "phishtrain/service/server.hpp"
#include "phishtrain/simulation.hpp"

using namespace phishtrain;
using namespace phishtrain::service;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("phishtrain-server-" + std::to_string(::getpid())) / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

/// A server on an ephemeral port, running on a background thread.
struct Running {
  explicit Running(const std::string& name, std::optional<fs::path> static_dir = std::nullopt) {
    store = std::make_shared<SessionStore>(harness::environment(), harness::options(fresh_dir(name)));
    ServerConfig cfg;
    cfg.port = 0;
    cfg.static_dir = std::move(static_dir);
    cfg.default_policy = {PolicyKind::kIblSelection, 0, calibrated_agent_params()};
    server = std::make_unique<Server>(store, cfg);
    port = server->bind();
    thread = std::thread([this] { server->run(); });
    client = std::make_unique<httplib::Client>("127.0.0.1", port);
    for (int i = 0; i < 200 && !client->Get("/healthz"); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }
  ~Running() {
    server->stop();
    thread.join();
  }

  httplib::Result post(const std::string& path, const json& body) {
    return client->Post(path, body.dump(), "application/json");
  }

  std::shared_ptr<SessionStore> store;
  std::unique_ptr<Server> server;
  int port = 0;
  std::thread thread;
  std::unique_ptr<httplib::Client> client;
};

json body_of(const httplib::Result& r) { return json::parse(r->body); }

}  // namespace

TEST_CASE("status mapping") {
  CHECK(http_status(ErrorCode::kNotFound) == 404);
  CHECK(http_status(ErrorCode::kConflict) == 409);
  CHECK(http_status(ErrorCode::kSessionComplete) == 409);
  CHECK(http_status(ErrorCode::kSessionIncomplete) == 409);
  CHECK(http_status(ErrorCode::kOutOfRange) == 400);
  CHECK(http_status(ErrorCode::kInvalidArgument) == 400);
  CHECK(http_status(ErrorCode::kInsufficientEmails) == 422);
}

TEST_CASE("health, config and error shapes") {
  Running s("basics");
  auto health = s.client->Get("/healthz");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(body_of(health)["status"] == "ok");

  auto config = s.client->Get("/config");
  REQUIRE(config);
  CHECK(body_of(config)["conditions"].size() == 4);
  CHECK(body_of(config)["actions"] == json(default_actions()));
  CHECK(body_of(config)["confidence"]["max"] == 5);

  auto bad_condition = s.post("/sessions", {{"condition", "ALIEN/PLAIN"}});
  REQUIRE(bad_condition);
  CHECK(bad_condition->status == 400);
  CHECK(body_of(bad_condition).contains("message"));

  auto bad_json = s.client->Post("/sessions", "{not json", "application/json");
  REQUIRE(bad_json);
  CHECK(bad_json->status == 400);
  CHECK(body_of(bad_json)["code"] == "invalid_argument");

  auto missing = s.client->Get("/sessions/nosuchsession/next");
  REQUIRE(missing);
  CHECK(missing->status == 404);
  auto unrouted = s.client->Get("/nowhere");
  REQUIRE(unrouted);
  CHECK(unrouted->status == 404);
}

TEST_CASE("a full session over HTTP") {
  Running s("flow");
  auto created = s.post("/sessions", {{"condition", to_string(kAllConditions[1])}, {"policy", "ibl"}, {"seed", 4}});
  REQUIRE(created);
  REQUIRE(created->status == 201);
  const std::string id = body_of(created)["session_id"];
  const std::string base = "/sessions/" + id;

  CHECK(s.client->Get(base + "/summary")->status == 409);
  for (int t = 1; t <= 60; ++t) {
    auto next = s.client->Get(base + "/next");
    REQUIRE(next);
    REQUIRE(next->status == 200);
    const auto served = body_of(next);
    CHECK(served["trial"] == t);
    CHECK_FALSE(served["email"]["subject"].get<std::string>().empty());
    if (t == 1) CHECK(s.client->Get(base + "/next")->status == 409);
    if (t == 2) {
      auto low = s.post(base + "/response", {{"trial", t}, {"classification", "HAM"}, {"confidence", 0}, {"action", "delete"}});
      CHECK(low->status == 400);
    }
    auto reply = s.post(base + "/response",
                        {{"trial", t}, {"classification", t % 2 ? "PHISHING" : "HAM"}, {"confidence", 4},
                         {"action", "report"}, {"response_ms", 1500}});
    REQUIRE(reply);
    REQUIRE(reply->status == 200);
    CHECK(body_of(reply)["feedback"].is_object() == served["feedback"].get<bool>());
  }
  CHECK(s.client->Get(base + "/next")->status == 409);
  CHECK(s.post(base + "/questionnaire", {{"answers", {1, 2, 3}}})->status == 400);
  CHECK(s.post(base + "/questionnaire", {{"answers", {10, 20, 30, 101}}})->status == 400);
  auto q = s.post(base + "/questionnaire", {{"answers", {10, 20, 30, 40}}});
  REQUIRE(q);
  CHECK(q->status == 200);

  auto summary = s.client->Get(base + "/summary");
  REQUIRE(summary);
  CHECK(summary->status == 200);
  const auto doc = body_of(summary);
  CHECK(doc["trials"].size() == 60);
  CHECK(doc["questionnaire"]["score"] == 25.0);
  CHECK(doc == s.store->summary(id));
  CHECK(body_of(s.client->Get(base))["completed"] == true);
}

TEST_CASE("static hosting and bind failures") {
  const auto site = fresh_dir("site");
  std::ofstream(site / "index.html") << "<h1>trainer</h1>";
  Running s("static", site);
  auto index = s.client->Get("/index.html");
  REQUIRE(index);
  CHECK(index->status == 200);
  CHECK(index->body == "<h1>trainer</h1>");
  CHECK(s.client->Get("/healthz")->status == 200);

  ServerConfig taken;
  taken.port = s.port;
  Server second(s.store, taken);
  try {
    second.bind();
    FAIL("expected the port to be busy");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kIo);
  }

  ServerConfig missing_dir;
  missing_dir.static_dir = site / "does-not-exist";
  CHECK_THROWS_AS(Server(s.store, missing_dir), Error);
}
