#include <doctest.h>

#include <cmath>
#include <random>

#include "../support/generators.hpp"
#include "../support/ibl_oracle.hpp"
#include "phishtrain/error.hpp"
#include "phishtrain/ibl/memory.hpp"

using namespace phishtrain;
using namespace phishtrain::ibl;

namespace {

Instance instance(std::vector<Trial> occurrences, AttributeVector attrs = {}, double utility = 1.0) {
  return Instance{kPhishing, std::move(attrs), utility, std::move(occurrences), false};
}

IBLParams noiseless(double tau = 1.0) {
  IBLParams p;
  p.noise = 0.0;
  p.temperature = tau;
  return p;
}

}  // namespace

TEST_CASE("activation of repeated occurrences under perfect match") {
  const IBLParams p = noiseless();
  const auto inst = instance({1, 3});
  const double expected = std::log(std::pow(4.0, -0.5) + std::pow(2.0, -0.5));
  CHECK(activation(inst, 5, {}, p, 0.0) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(activation(inst, 5, {}, p, 0.0) == doctest::Approx(0.18823).epsilon(1e-4));
}

TEST_CASE("partial match penalty with a half-similar scalar") {
  const IBLParams p = noiseless();
  const auto inst = instance({1}, {ScalarAttribute{0.5}});
  CHECK(activation(inst, 2, {ScalarAttribute{1.0}}, p, 0.0) == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("retrieval, blending and choice on hand-worked values") {
  const double acts[2] = {0.0, std::log(3.0)};
  const auto p = softmax(acts, 1.0);
  CHECK(p[0] == doctest::Approx(0.25));
  CHECK(p[1] == doctest::Approx(0.75));

  const double vals[2] = {1.0, 0.0};
  const auto c = softmax(vals, 1.0);
  CHECK(c[0] == doctest::Approx(std::exp(1.0) / (1.0 + std::exp(1.0))));
  CHECK(c[0] == doctest::Approx(0.7311).epsilon(1e-4));
  CHECK(c[1] == doctest::Approx(0.2689).epsilon(1e-4));

  // With negligible decay every occurrence counts 1, so one occurrence of
  // u = -1 and three of u = +1 give activations 0 and ln 3: P = (0.25, 0.75).
  IBLParams flat = noiseless();
  flat.decay = 1e-12;
  MemoryStore b(flat, 2, 1, false);
  const AttributeVector x{ScalarAttribute{0.0}};
  b.record_outcome(kHam, x, -1.0, 1);
  b.record_outcome(kHam, x, 1.0, 2);
  b.record_outcome(kHam, x, 1.0, 3);
  b.record_outcome(kHam, x, 1.0, 4);
  CHECK(b.blended_value_noiseless(kHam, x, 5) == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("prepopulated instances match every probe and carry the default utility") {
  IBLParams p = noiseless();
  p.default_utility = 0.7;
  MemoryStore m(p, 2, 3);
  REQUIRE(m.instances(kPhishing).size() == 1);
  CHECK(m.instances(kPhishing)[0].prepopulated);
  CHECK(m.instances(kPhishing)[0].occurrences == std::vector<Trial>{0});
  CHECK(m.blended_value_noiseless(kPhishing, {ScalarAttribute{42.0}}, 1) == doctest::Approx(0.7));
}

TEST_CASE("identical observations consolidate into one instance") {
  MemoryStore m(noiseless(), 2, 1, false);
  const AttributeVector x{make_embedding_attribute("a", {1.0, 0.0})};
  m.record_outcome(kHam, x, 1.0, 1);
  m.record_outcome(kHam, x, 1.0, 2);
  REQUIRE(m.instances(kHam).size() == 1);
  CHECK(m.instances(kHam)[0].occurrences == std::vector<Trial>{1, 2});
  m.record_outcome(kHam, x, -1.0, 3);
  CHECK(m.instances(kHam).size() == 2);
}

TEST_CASE("40 distinct feedback trials store 40 instances beside the prepopulated ones") {
  MemoryStore m(noiseless(), 2, 1);
  for (int i = 1; i <= 40; ++i) {
    m.record_outcome(OptionId{static_cast<std::uint32_t>(i % 2)},
                     {make_embedding_attribute("e" + std::to_string(i), {1.0, static_cast<double>(i)})}, 1.0, i);
  }
  CHECK(m.size() == 42);
}

TEST_CASE("errors: non-causal probes, zero vectors, bad params") {
  CHECK_THROWS_AS(base_level_activation(std::vector<Trial>{3}, 3, 0.5), Error);
  try {
    base_level_activation(std::vector<Trial>{3}, 2, 0.5);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kNonCausalProbe);
  }
  CHECK_THROWS_AS(make_embedding_attribute("z", {0.0, 0.0}), Error);
  IBLParams bad;
  bad.noise = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.temperature = 1.0;
  CHECK_NOTHROW(bad.validate());
  bad.decay = -1;
  CHECK_THROWS_AS(MemoryStore(bad, 2, 1), Error);

  MemoryStore m(noiseless(), 2, 1);
  m.record_outcome(kHam, {ScalarAttribute{0.0}}, 1.0, 5);
  CHECK_THROWS_AS(m.record_outcome(kHam, {ScalarAttribute{0.0}}, 1.0, 4), Error);
  CHECK_THROWS_AS(m.advance_to(2), Error);
  CHECK_THROWS_AS(m.instances(OptionId{7}), Error);
}

TEST_CASE("recency and frequency") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const double d = gen::uniform(rng, 0.05, 3.0);
    const Trial at = gen::integer(rng, 0, 50);
    const Trial t = at + gen::integer(rng, 1, 50);
    CHECK(base_level_activation(std::vector<Trial>{at}, t, d) >
          base_level_activation(std::vector<Trial>{at}, t + 1, d));
    std::vector<Trial> occ{at};
    const double before = base_level_activation(occ, t, d);
    occ.push_back(t - 1 > at ? t - 1 : at);
    CHECK(base_level_activation(occ, t, d) > before);
  }
}

TEST_CASE("partial matching lowers activation by exactly the weighted penalty") {
  IBLParams p = noiseless();
  p.mismatch = 2.0;
  p.weights = {0.5, 1.5};
  const auto inst = instance({1, 4}, {ScalarAttribute{0.2}, ScalarAttribute{0.9}});
  const double exact = activation(inst, 6, {ScalarAttribute{0.2}, ScalarAttribute{0.9}}, p, 0.0);
  const double off = activation(inst, 6, {ScalarAttribute{0.5}, ScalarAttribute{0.8}}, p, 0.0);
  CHECK(off < exact);
  CHECK(exact - off == doctest::Approx(2.0 * (0.5 * 0.3 + 1.5 * 0.1)).epsilon(1e-12));
}

TEST_CASE("softmax sharpens toward the argmax as the temperature falls") {
  const double v[3] = {0.3, 0.5, 0.1};
  double last = 0.0;
  for (double beta : {1.0, 0.1, 0.01}) {
    const double p = softmax(v, beta)[1];
    CHECK(p > last);
    last = p;
  }
  CHECK(last > 0.99999);
}

TEST_CASE("argmax choice breaks ties toward the lowest option") {
  MemoryStore m(noiseless(), 2, 1);
  const std::vector<OptionId> opts{kHam, kPhishing};
  const auto c = m.choose(opts, {ScalarAttribute{0.0}}, ChoiceMode::kArgmax);
  CHECK(c.option == kPhishing);
  CHECK(c.values[0] == c.values[1]);
}

TEST_CASE("blended values match the brute-force oracle") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 300; ++i) {
    auto c = gen::memory_case(rng, true);
    const auto p = oracle::from(c.memory.params());
    for (std::uint32_t k = 0; k < 2; ++k) {
      const auto span = c.memory.instances(OptionId{k});
      if (span.empty()) continue;
      const std::vector<Instance> group(span.begin(), span.end());
      const double lib = c.memory.blended_value_noiseless(OptionId{k}, c.probe, c.t);
      CHECK(lib == doctest::Approx(static_cast<double>(oracle::blended(group, c.t, c.probe, p))).epsilon(1e-12));
    }
  }
}

TEST_CASE("memories with equal seeds and histories are identical; dumps round-trip") {
  std::mt19937_64 a(9), b(9);
  auto x = gen::memory_case(a, false);
  auto y = gen::memory_case(b, false);
  CHECK(x.memory == y.memory);
  const std::vector<OptionId> opts{kPhishing, kHam};
  for (int i = 0; i < 5; ++i) {
    const auto cx = x.memory.choose(opts, x.probe, ChoiceMode::kSoftmax);
    const auto cy = y.memory.choose(opts, y.probe, ChoiceMode::kSoftmax);
    CHECK(cx.option == cy.option);
    CHECK(cx.values == cy.values);
  }
  const auto restored = MemoryStore::from_json(x.memory.to_json());
  CHECK(restored == x.memory);
  CHECK(restored.to_json().dump() == x.memory.to_json().dump());
  CHECK(params_from_json(params_json(x.memory.params())) == x.memory.params());
}

TEST_CASE("trace stores outcomes only for trials with a utility") {
  MemoryStore m(noiseless(), 2, 1);
  const AttributeVector x{ScalarAttribute{0.25}};
  const std::vector<TracedTrial> trials{{x, kHam, std::nullopt}, {x, kHam, 1.0}, {x, kPhishing, -1.0}};
  trace(m, trials);
  CHECK(m.now() == 3);
  CHECK(m.size() == 4);
  CHECK(m.instances(kHam)[1].occurrences == std::vector<Trial>{2});
}
