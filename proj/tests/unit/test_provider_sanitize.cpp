#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <unistd.h>

#include "phishtrain/embeddings.hpp"
#include "phishtrain/error.hpp"
#include "phishtrain/service/sanitize.hpp"

using namespace phishtrain;
using phishtrain::service::sanitize_markup;

namespace {

/// Local stand-in for an embedding provider. Fails the first `failures`
/// requests with `fail_status`, then embeds each input as (length, 1, index).
class FakeProvider {
 public:
  FakeProvider(int failures, int fail_status, std::string token = "secret")
      : failures_(failures), fail_status_(fail_status), token_(std::move(token)) {
    server_.Post("/v1/embeddings", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests;
      if (req.get_header_value("Authorization") != "Bearer " + token_) {
        res.status = 401;
        return;
      }
      if (failures_-- > 0) {
        res.status = fail_status_;
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      nlohmann::json data = nlohmann::json::array();
      std::size_t i = 0;
      for (const auto& text : body.at("input")) {
        data.push_back({{"index", i}, {"embedding", {text.get<std::string>().size(), 1.0, static_cast<double>(i)}}});
        ++i;
      }
      res.set_content(nlohmann::json{{"data", data}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeProvider() {
    server_.stop();
    thread_.join();
  }

  ProviderConfig config(const std::filesystem::path& cache) const {
    ProviderConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1/embeddings";
    c.token = "secret";
    c.cache_path = cache;
    c.initial_backoff_seconds = 0.01;
    c.batch_size = 2;
    c.max_concurrency = 1;
    return c;
  }

  std::atomic<int> requests{0};

 private:
  int failures_;
  int fail_status_;
  std::string token_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::filesystem::path fresh(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("phishtrain-provider-" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  std::filesystem::remove(dir / name);
  return dir / name;
}

const std::vector<std::pair<std::string, std::string>> kTexts{{"a", "first"}, {"b", "second one"}};

}  // namespace

TEST_CASE("healthy provider fills and then serves from the cache") {
  FakeProvider provider(0, 500);
  const auto cache = fresh("healthy.jsonl");
  FetchStats stats;
  const auto table = fetch_embeddings(provider.config(cache), kTexts, &stats);
  CHECK(table.size() == 2);
  CHECK(stats.fetched == 2);
  CHECK(std::filesystem::exists(cache));
  CHECK(table.vector("b")[0] == 10.0);

  const int before = provider.requests.load();
  FetchStats again;
  const auto cached = fetch_embeddings(provider.config(cache), kTexts, &again);
  CHECK(provider.requests.load() == before);
  CHECK(again.cache_hits == 2);
  CHECK(cached == table);
}

TEST_CASE("transient failures are retried") {
  FakeProvider provider(2, 503);
  const auto table = fetch_embeddings(provider.config(fresh("retry.jsonl")), kTexts);
  CHECK(table.size() == 2);
  CHECK(provider.requests.load() == 3);
}

TEST_CASE("three server errors give up without touching the cache") {
  FakeProvider provider(3, 500);
  const auto cache = fresh("broken.jsonl");
  try {
    fetch_embeddings(provider.config(cache), kTexts);
    FAIL("expected a transient failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTransient);
  }
  CHECK_FALSE(std::filesystem::exists(cache));
}

TEST_CASE("rejected credentials are not retried") {
  FakeProvider provider(0, 500, "other-token");
  try {
    fetch_embeddings(provider.config(fresh("auth.jsonl")), kTexts);
    FAIL("expected an auth failure");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kAuth);
  }
  CHECK(provider.requests.load() == 1);
}

TEST_CASE("sanitizer drops active content and keeps the text") {
  const auto out = sanitize_markup(
      "<div style=\"color:red\" onclick=\"steal()\"><script>alert(1)</script><b>Pay now</b>"
      "<iframe src=\"https://evil.example\"></iframe></div>");
  CHECK(out.find("script") == std::string::npos);
  CHECK(out.find("alert") == std::string::npos);
  CHECK(out.find("onclick") == std::string::npos);
  CHECK(out.find("iframe") == std::string::npos);
  CHECK(out.find("evil.example") == std::string::npos);
  CHECK(out.find("<b>Pay now</b>") != std::string::npos);
  CHECK(out.find("color:red") != std::string::npos);
}

TEST_CASE("sanitizer neutralises links, forms, images and remote CSS") {
  const auto link = sanitize_markup("<a href=\"https://bank.example/login\" target=\"_blank\">Log in</a>");
  CHECK(link.find(" href=") == std::string::npos);
  CHECK(link.find("data-href=\"https://bank.example/login\"") != std::string::npos);
  CHECK(link.find("Log in") != std::string::npos);
  CHECK(sanitize_markup("<a href=\"#top\">up</a>").find("href=\"#top\"") != std::string::npos);
  CHECK(sanitize_markup("<a href=\"javascript:alert(1)\">x</a>").find("javascript") == std::string::npos);
  CHECK(sanitize_markup("<a href=\"jav&#x61;script:alert(1)\">x</a>").find("script:") == std::string::npos);

  const auto form = sanitize_markup("<form action=\"https://evil.example/post\"><button formaction=\"x\">Go</button></form>");
  CHECK(form.find("action") == std::string::npos);
  CHECK(form.find("evil") == std::string::npos);

  const auto img = sanitize_markup("<p><img src=\"https://tracker.example/p.gif\" alt=\"Bank logo\"></p>");
  CHECK(img.find("tracker") == std::string::npos);
  CHECK(img.find("[image: Bank logo]") != std::string::npos);

  const auto css = sanitize_markup(
      "<style>@import url(https://x.example/a.css); body{background:url(https://x.example/b.png);color:blue}</style>"
      "<p style=\"background-image:u\\rl(https://x.example/c.png); font-weight:bold\">hi</p>");
  CHECK(css.find("x.example") == std::string::npos);
  CHECK(css.find("@import") == std::string::npos);
  CHECK(css.find("color:blue") != std::string::npos);
  CHECK(css.find("font-weight:bold") != std::string::npos);

  CHECK(sanitize_markup("<svg><script>1</script></svg>after").find("after") != std::string::npos);
  CHECK(sanitize_markup("<!-- hidden -->1 < 2").find("hidden") == std::string::npos);
  CHECK(sanitize_markup("1 < 2").find("&lt;") != std::string::npos);
  CHECK(sanitize_markup("<link rel=stylesheet href=//x.example/s.css>").find("x.example") == std::string::npos);
}
