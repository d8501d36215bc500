#pragma once

// Randomized fixtures shared by the unit and acceptance suites.

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "phishtrain/corpus.hpp"
#include "phishtrain/embeddings.hpp"
#include "phishtrain/ibl/memory.hpp"
#include "phishtrain/selection.hpp"

namespace gen {

using namespace phishtrain;

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}
inline int integer(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline std::vector<double> vec(std::mt19937_64& rng, std::size_t dim) {
  std::vector<double> v(dim);
  do {
    for (auto& x : v) x = uniform(rng, -1.0, 1.0);
  } while (std::all_of(v.begin(), v.end(), [](double x) { return std::abs(x) < 1e-3; }));
  return v;
}

inline ibl::IBLParams params(std::mt19937_64& rng, bool noiseless) {
  ibl::IBLParams p;
  p.decay = uniform(rng, 0.1, 2.0);
  p.mismatch = uniform(rng, 0.0, 3.0);
  p.choice_temperature = uniform(rng, 0.1, 1.0);
  p.default_utility = uniform(rng, -2.0, 2.0);
  if (noiseless) {
    p.noise = 0.0;
    p.temperature = uniform(rng, 0.2, 2.0);
  } else {
    p.noise = uniform(rng, 0.05, 0.6);
  }
  return p;
}

/// A small memory (at most `max_instances` instances in total) over either
/// one embedding attribute or up to three weighted scalar attributes, plus a
/// probe and a causal probe time.
struct MemoryCase {
  ibl::MemoryStore memory;
  ibl::AttributeVector probe;
  ibl::Trial t;
};

inline MemoryCase memory_case(std::mt19937_64& rng, bool noiseless, std::size_t max_instances = 5) {
  ibl::IBLParams p = params(rng, noiseless);
  const bool embedding = integer(rng, 0, 1) == 1;
  const std::size_t n_attr = embedding ? 1 : static_cast<std::size_t>(integer(rng, 1, 3));
  if (!embedding) {
    for (std::size_t j = 0; j < n_attr; ++j) p.weights.push_back(uniform(rng, 0.0, 2.0));
  }
  const bool prepopulate = integer(rng, 0, 1) == 1;
  ibl::MemoryStore memory(p, 2, rng(), prepopulate);

  // A small pool of attribute values so identical observations (and their
  // consolidation into one instance) happen often.
  const std::size_t dim = static_cast<std::size_t>(integer(rng, 2, 6));
  std::vector<ibl::AttributeVector> pool;
  for (int i = 0; i < 4; ++i) {
    ibl::AttributeVector a;
    if (embedding) {
      a.push_back(ibl::make_embedding_attribute("e" + std::to_string(i), vec(rng, dim)));
    } else {
      for (std::size_t j = 0; j < n_attr; ++j) a.push_back(ibl::ScalarAttribute{uniform(rng, -0.5, 1.5)});
    }
    pool.push_back(std::move(a));
  }
  const std::vector<double> utilities{-1.0, 1.0, uniform(rng, -3.0, 3.0)};

  const int records = integer(rng, 0, 12);
  for (int r = 0; r < records; ++r) {
    const ibl::OptionId option{static_cast<std::uint32_t>(integer(rng, 0, 1))};
    const auto& attrs = pool[static_cast<std::size_t>(integer(rng, 0, 3))];
    const double u = utilities[static_cast<std::size_t>(integer(rng, 0, 2))];
    const bool exists = [&] {
      for (const auto& inst : memory.instances(option)) {
        if (!inst.prepopulated && inst.utility == u && inst.attributes == attrs) return true;
      }
      return false;
    }();
    if (!exists && memory.size() >= max_instances) continue;
    memory.record_outcome(option, attrs, u, memory.now() + integer(rng, 1, 3));
  }
  ibl::AttributeVector probe;
  if (integer(rng, 0, 3) == 0) {
    probe = pool[static_cast<std::size_t>(integer(rng, 0, 3))];
  } else if (embedding) {
    probe.push_back(ibl::make_embedding_attribute("probe", vec(rng, dim)));
  } else {
    for (std::size_t j = 0; j < n_attr; ++j) probe.push_back(ibl::ScalarAttribute{uniform(rng, -0.5, 1.5)});
  }
  const ibl::Trial t = memory.now() + integer(rng, 1, 6);
  return MemoryCase{std::move(memory), std::move(probe), t};
}

/// A traced memory built from seen emails, and a set of unseen emails.
struct SelectionCase {
  EmbeddingTable table;
  std::vector<EmailRecord> unseen;
  ibl::MemoryStore memory;
  ibl::Trial t;
};

inline EmailRecord email(const std::string& id, ibl::OptionId label) {
  EmailRecord e;
  e.id = id;
  e.base_id = id;
  e.label = label;
  e.subject = "subject " + id;
  e.sender = "sender@" + id + ".example";
  e.body_plain = "body " + id;
  return e;
}

inline SelectionCase selection_case(std::mt19937_64& rng, std::size_t max_instances = 5, std::size_t max_unseen = 6) {
  const std::size_t dim = static_cast<std::size_t>(integer(rng, 2, 6));
  const std::size_t n_seen = static_cast<std::size_t>(integer(rng, 0, 5));
  const std::size_t n_unseen = static_cast<std::size_t>(integer(rng, 1, static_cast<int>(max_unseen)));
  EmbeddingTable table;
  std::vector<EmailRecord> seen, unseen;
  // Ids are shuffled so list order and id order disagree.
  std::vector<int> ids(n_seen + n_unseen);
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  std::shuffle(ids.begin(), ids.end(), rng);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const std::string id = "m" + std::to_string(100 + ids[i]);
    table.add(id, vec(rng, dim));
    auto e = email(id, integer(rng, 0, 1) ? ibl::kPhishing : ibl::kHam);
    (i < n_seen ? seen : unseen).push_back(std::move(e));
  }
  ibl::MemoryStore memory(params(rng, integer(rng, 0, 1) == 1), 2, rng(), true);
  const int records = seen.empty() ? 0 : integer(rng, 0, 8);
  for (int r = 0; r < records; ++r) {
    const auto& e = seen[static_cast<std::size_t>(integer(rng, 0, static_cast<int>(seen.size()) - 1))];
    const ibl::OptionId response = integer(rng, 0, 1) ? ibl::kPhishing : ibl::kHam;
    const double u = response == e.label ? 1.0 : -1.0;
    const auto probe = email_probe(e, table);
    bool exists = false;
    for (const auto& inst : memory.instances(response)) {
      exists = exists || (!inst.prepopulated && inst.utility == u && inst.attributes == probe);
    }
    if (!exists && memory.size() >= max_instances) continue;
    memory.record_outcome(response, probe, u, memory.now() + integer(rng, 1, 2));
  }
  const ibl::Trial t = memory.now() + integer(rng, 1, 3);
  return SelectionCase{std::move(table), std::move(unseen), std::move(memory), t};
}

}  // namespace gen
