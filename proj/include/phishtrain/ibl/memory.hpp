#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "phishtrain/ibl/types.hpp"
#include "phishtrain/rng.hpp"

namespace phishtrain {
class EmbeddingTable;
}

namespace phishtrain::ibl {

/// ln(sum over occurrences of (t - t')^-d). Requires every occurrence < t.
double base_level_activation(std::span<const Trial> occurrences, Trial t, double decay);

/// mu * sum_j w_j (S_ij - 1). Prepopulated instances match every probe exactly.
double mismatch_term(const AttributeVector& probe, const Instance& instance, const IBLParams& params);

double activation(const Instance& instance, Trial t, const AttributeVector& probe,
                  const IBLParams& params, double noise_draw);

/// exp(x_i / temperature) normalized, evaluated with a max shift.
std::vector<double> softmax(std::span<const double> values, double temperature);

std::vector<double> retrieval_probabilities(std::span<const Instance> matching, Trial t,
                                            const AttributeVector& probe, const IBLParams& params,
                                            std::span<const double> noise_draws);

/// Instance-based learning memory: instances grouped by option, a trial clock
/// and a private random stream for activation noise and softmax draws.
class MemoryStore {
 public:
  MemoryStore(IBLParams params, std::size_t option_count, std::uint64_t seed,
              bool prepopulate = true);

  const IBLParams& params() const noexcept { return params_; }
  std::size_t option_count() const noexcept { return by_option_.size(); }
  Trial now() const noexcept { return now_; }
  std::uint64_t seed() const noexcept { return seed_; }
  Rng& rng() noexcept { return rng_; }

  std::span<const Instance> instances(OptionId option) const;
  std::size_t size() const;

  /// Blended value of `option` for `probe` evaluated at trial `t`, with
  /// activation noise drawn from this store's stream.
  double blended_value(OptionId option, const AttributeVector& probe, Trial t);

  /// Blended value with the noise term fixed at zero. Does not touch the stream.
  double blended_value_noiseless(OptionId option, const AttributeVector& probe, Trial t) const;

  /// Chooses among `options` for `probe` at trial now()+1.
  Choice choose(std::span<const OptionId> options, const AttributeVector& probe, ChoiceMode mode);

  /// Stores (option, probe, utility) at trial t, consolidating identical triples.
  void record_outcome(OptionId option, const AttributeVector& probe, double utility, Trial t);

  /// Moves the clock forward without storing anything.
  void advance_to(Trial t);

  /// `compact` writes embedding attributes as their email id only; restoring
  /// such a dump needs the embedding table.
  nlohmann::json to_json(bool compact = false) const;
  static MemoryStore from_json(const nlohmann::json& doc, const EmbeddingTable* table = nullptr);

  friend bool operator==(const MemoryStore& a, const MemoryStore& b);

 private:
  void check_option(OptionId option) const;

  IBLParams params_;
  std::vector<std::vector<Instance>> by_option_;
  Trial now_ = 0;
  std::uint64_t seed_ = 0;
  Rng rng_;
};

nlohmann::json params_json(const IBLParams& params);
/// Missing fields take their defaults. Validates the result.
IBLParams params_from_json(const nlohmann::json& doc);

struct TracedTrial {
  AttributeVector probe;
  OptionId chosen;
  std::optional<double> utility;
};

/// Replays observed trials into `memory`, one trial per clock tick. Trials
/// without a utility advance the clock but store nothing.
void trace(MemoryStore& memory, std::span<const TracedTrial> trials);

}  // namespace phishtrain::ibl
