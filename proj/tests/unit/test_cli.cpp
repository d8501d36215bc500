#include <doctest.h>

#include <filesystem>
#include <sstream>

#include <unistd.h>

#include "../support/service_harness.hpp"
#include "phishtrain/cli.hpp"

namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome cli(std::vector<std::string> args) {
  args.insert(args.begin(), "phishtrain");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = phishtrain::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path workdir() {
  const auto dir = fs::temp_directory_path() / ("phishtrain-cli-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("help and usage errors") {
  const auto help = cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("simulate") != std::string::npos);
  CHECK(cli({"simulate", "--help"}).code == 0);
  CHECK(cli({"--no-such-flag"}).code == 2);
  CHECK(cli({"simulate", "--agents", "many"}).code == 2);

  const auto dir = workdir();
  REQUIRE(cli({"gen-corpus", "--out", (dir / "c").string(), "--n-base", "8"}).code == 0);
  const auto missing = cli({"simulate", "--corpus", (dir / "c" / "corpus.json").string(), "--embeddings",
                            (dir / "nothing.jsonl").string(), "--out", (dir / "x").string()});
  CHECK(missing.code == 2);
  CHECK_FALSE(missing.err.empty());
}

TEST_CASE("simulate is reproducible and analyze reads its export") {
  const auto dir = workdir();
  const auto corpus = dir / "corpus80";
  REQUIRE(cli({"gen-corpus", "--out", corpus.string(), "--n-base", "80", "--seed", "5"}).code == 0);
  CHECK(fs::exists(corpus / "corpus.json"));
  CHECK(fs::exists(corpus / "embeddings.jsonl"));

  auto simulate = [&](const std::string& out, const std::string& threads) {
    return cli({"simulate", "--corpus", (corpus / "corpus.json").string(), "--embeddings",
                (corpus / "embeddings.jsonl").string(), "--out", (dir / out).string(), "--agents", "4", "--seed",
                "3", "--threads", threads, "--condition", "HUMAN/PLAIN", "--export-participants"});
  };
  const auto a = simulate("run-a", "1");
  INFO(a.err);
  REQUIRE(a.code == 0);
  REQUIRE(simulate("run-b", "3").code == 0);
  for (const char* file : {"report.json", "report.csv", "participants.json"}) {
    CHECK(harness::read_file(dir / "run-a" / file) == harness::read_file(dir / "run-b" / file));
  }
  const auto resolved = nlohmann::json::parse(harness::read_file(dir / "run-a" / "resolved-config.json"));
  CHECK(resolved["seed"] == 3);

  const auto analyzed = cli({"analyze", "--participants", (dir / "run-a" / "participants.json").string(), "--out",
                             (dir / "analysis").string()});
  INFO(analyzed.err);
  CHECK(analyzed.code == 0);
  CHECK(fs::exists(dir / "analysis" / "analysis.json"));
}
