#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

#include "../support/generators.hpp"
#include "phishtrain/corpus.hpp"
#include "phishtrain/embeddings.hpp"
#include "phishtrain/error.hpp"
#include "phishtrain/simd/kernels.hpp"

using namespace phishtrain;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("phishtrain-unit-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kIo;
}

std::vector<EmailRecord> eight_records() {
  std::vector<EmailRecord> out;
  for (int b = 0; b < 2; ++b) {
    for (auto c : kAllConditions) {
      auto e = gen::email("b" + std::to_string(b) + "-" + std::string(to_string(c.author)) + "-" +
                              std::string(to_string(c.style)),
                          b == 0 ? ibl::kPhishing : ibl::kHam);
      e.base_id = "b" + std::to_string(b);
      e.author = c.author;
      e.style = c.style;
      if (c.style == Style::kGpt4Styled) e.body_markup = "<p>" + e.body_plain + "</p>";
      out.push_back(e);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("scalar and vectorized kernels agree") {
  std::mt19937_64 rng(3);
  for (auto isa : {simd::Isa::kAvx2, simd::Isa::kNeon}) {
    if (!simd::isa_available(isa)) continue;
    const auto& ref = simd::kernels_for(simd::Isa::kScalar);
    const auto& vec = simd::kernels_for(isa);
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 15u, 16u, 17u, 63u, 64u, 300u, 1536u}) {
      const auto a = gen::vec(rng, std::max<std::size_t>(n, 1));
      const auto b = gen::vec(rng, std::max<std::size_t>(n, 1));
      double mag = 0.0;
      for (std::size_t i = 0; i < n; ++i) mag += std::abs(a[i] * b[i]);
      CHECK(std::abs(ref.dot(a.data(), b.data(), n) - vec.dot(a.data(), b.data(), n)) <= 1e-14 * (1 + mag));
      CHECK(ref.squared_norm(a.data(), n) == doctest::Approx(vec.squared_norm(a.data(), n)).epsilon(1e-14));

      const std::size_t rows = 5;
      std::vector<double> m;
      for (std::size_t r = 0; r < rows; ++r) {
        const auto row = gen::vec(rng, std::max<std::size_t>(n, 1));
        m.insert(m.end(), row.begin(), row.begin() + static_cast<std::ptrdiff_t>(n));
      }
      std::vector<double> out_ref(rows), out_vec(rows);
      ref.dot_rows(a.data(), m.data(), rows, n, out_ref.data());
      vec.dot_rows(a.data(), m.data(), rows, n, out_vec.data());
      for (std::size_t r = 0; r < rows; ++r) {
        CHECK(out_ref[r] == doctest::Approx(out_vec[r]).epsilon(1e-13));
        CHECK(out_ref[r] == doctest::Approx(ref.dot(a.data(), m.data() + r * n, n)).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("dispatch can be forced to the scalar reference") {
  const auto before = simd::active_isa();
  simd::set_active_isa(simd::Isa::kScalar);
  CHECK(simd::active_isa() == simd::Isa::kScalar);
  const std::vector<double> a{1, 2, 3}, b{4, 5, 6};
  CHECK(simd::dot(a, b) == 32.0);
  simd::set_active_isa(before);
  if (!simd::isa_available(simd::Isa::kNeon)) CHECK_THROWS_AS(simd::set_active_isa(simd::Isa::kNeon), Error);
}

TEST_CASE("cosine similarity and its [0,1] mapping") {
  const std::vector<double> x{1, 0}, y{0, 1}, d{1, 1}, v{0.3, -2.0, 5.0};
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0));
  CHECK(cosine_similarity(x, y) == 0.0);
  CHECK(cosine_similarity(x, d) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(clamp_similarity(0.8) == 0.8);
  CHECK(clamp_similarity(-0.3) == 0.0);
  CHECK(similarity_01(v, v) == doctest::Approx(1.0));
  CHECK(code_of([&] { cosine_similarity(x, v); }) == ErrorCode::kDimMismatch);
  CHECK(code_of([&] { cosine_similarity(x, std::vector<double>{0, 0}); }) == ErrorCode::kZeroVector);

  std::mt19937_64 rng(17);
  for (int i = 0; i < 500; ++i) {
    const auto a = gen::vec(rng, 6), b = gen::vec(rng, 6);
    const double s = similarity_01(a, b);
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
    CHECK(s == similarity_01(b, a));
    std::vector<double> scaled(a);
    const double c = gen::uniform(rng, 0.01, 100.0);
    for (auto& z : scaled) z *= c;
    CHECK(similarity_01(scaled, b) == doctest::Approx(s).epsilon(1e-12));
    CHECK(similarity_01(scaled, a) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("embedding files: load, validation and round trip") {
  const auto good = scratch("good.jsonl");
  write(good,
        "{\"id\":\"a\",\"vector\":[1,0,0]}\n{\"id\":\"b\",\"vector\":[0,1,0]}\n"
        "{\"id\":\"c\",\"vector\":[0,0,1]}\n{\"id\":\"d\",\"vector\":[1,1,1]}\n");
  const auto t = load_embeddings(good);
  CHECK(t.size() == 4);
  CHECK(t.dim() == 3);
  const auto copy = scratch("copy.jsonl");
  save_embeddings(t, copy);
  CHECK(load_embeddings(copy) == t);

  const auto mixed = scratch("mixed.jsonl");
  write(mixed, "{\"id\":\"a\",\"vector\":[1,0,0]}\n{\"id\":\"odd\",\"vector\":[0,1,0,1]}\n");
  try {
    load_embeddings(mixed);
    FAIL("expected a dim mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDimMismatch);
    CHECK(std::string(e.what()).find("odd") != std::string::npos);
  }

  const auto empty = scratch("empty.jsonl");
  write(empty, "");
  CHECK(load_embeddings(empty).empty());

  const auto dup = scratch("dup.jsonl");
  write(dup, "{\"id\":\"a\",\"vector\":[1]}\n{\"id\":\"a\",\"vector\":[2]}\n");
  CHECK(code_of([&] { load_embeddings(dup); }) == ErrorCode::kDuplicateId);
  CHECK(code_of([&] { t.vector("zzz"); }) == ErrorCode::kMissingEmbedding);
}

TEST_CASE("corpus validation") {
  auto records = eight_records();
  CHECK_NOTHROW(validate_corpus(records));
  CHECK(parse_corpus(nlohmann::json(std::vector<nlohmann::json>{})).empty());

  const auto path = scratch("corpus.json");
  save_corpus(records, path);
  CHECK(load_corpus(path) == records);

  auto missing_markup = records;
  missing_markup[1].body_markup.reset();
  try {
    validate_corpus(missing_markup);
    FAIL("expected a validation error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kValidation);
    CHECK(std::string(e.what()).find(missing_markup[1].id) != std::string::npos);
  }

  auto label_drift = records;
  label_drift[2].label = ibl::kHam;
  CHECK(code_of([&] { validate_corpus(label_drift); }) == ErrorCode::kValidation);

  auto duplicate = records;
  duplicate.push_back(records[0]);
  duplicate.back().id = "another-id";
  CHECK(code_of([&] { validate_corpus(duplicate); }) == ErrorCode::kValidation);
}

TEST_CASE("condition subsets") {
  const auto records = eight_records();
  const auto set = condition_subset(records, {Author::kGpt4, Style::kGpt4Styled});
  CHECK(set.emails.size() == 2);
  for (const auto& e : set.emails) CHECK(e.condition() == Condition{Author::kGpt4, Style::kGpt4Styled});

  std::vector<EmailRecord> no_gpt;
  for (const auto& r : records) {
    if (r.author == Author::kHuman) no_gpt.push_back(r);
  }
  CHECK(code_of([&] { condition_subset(no_gpt, {Author::kGpt4, Style::kPlain}); }) == ErrorCode::kEmptySet);

  const auto full = synth_corpus(7, 360);
  for (auto c : kAllConditions) {
    const auto s = condition_subset(full.emails, c);
    CHECK(s.emails.size() == 360);
    CHECK(std::count_if(s.emails.begin(), s.emails.end(), [](const auto& e) { return e.is_phishing(); }) == 180);
  }
}

TEST_CASE("synthetic corpus") {
  const auto a = synth_corpus(7, 4);
  CHECK(a.emails.size() == 16);
  CHECK(std::count_if(a.emails.begin(), a.emails.end(), [](const auto& e) { return e.is_phishing(); }) == 8);
  const auto b = synth_corpus(7, 4);
  CHECK(a.emails == b.emails);
  CHECK(a.embeddings == b.embeddings);
  CHECK(synth_corpus(8, 4).embeddings != a.embeddings);
  CHECK(code_of([] { synth_corpus(7, 3); }) == ErrorCode::kInvalidArgument);
  CHECK_NOTHROW(validate_corpus(a.emails));
  CHECK_NOTHROW(require_embeddings(a.emails, a.embeddings));
  for (const auto& e : a.emails) {
    CHECK(e.body_markup.has_value() == (e.style == Style::kGpt4Styled));
    CHECK(!embedding_text(e).empty());
  }

  // Same-label emails sit closer together than opposite-label ones on average.
  const auto big = synth_corpus(3, 80);
  const auto set = condition_subset(big.emails, kAllConditions[0]);
  double same = 0, diff = 0;
  int n_same = 0, n_diff = 0;
  for (std::size_t i = 0; i < set.emails.size(); ++i) {
    for (std::size_t j = i + 1; j < set.emails.size(); ++j) {
      const double s = cosine_similarity(big.embeddings.vector(set.emails[i].id), big.embeddings.vector(set.emails[j].id));
      if (set.emails[i].label == set.emails[j].label) {
        same += s;
        ++n_same;
      } else {
        diff += s;
        ++n_diff;
      }
    }
  }
  CHECK(same / n_same > diff / n_diff);
}
