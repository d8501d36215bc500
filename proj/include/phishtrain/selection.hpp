#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "phishtrain/corpus.hpp"
#include "phishtrain/embeddings.hpp"
#include "phishtrain/ibl/memory.hpp"
#include "phishtrain/rng.hpp"

namespace phishtrain {

enum class PolicyKind { kRandom, kIblSelection };

std::string_view to_string(PolicyKind kind);
PolicyKind parse_policy(std::string_view text);

/// How feedback-block emails are chosen. Pre/post emails are always random.
struct SelectionPolicy {
  PolicyKind kind = PolicyKind::kRandom;
  std::uint64_t seed = 0;
  /// Parameters of the teacher model traced from the learner (IBL selection only).
  ibl::IBLParams params;

  friend bool operator==(const SelectionPolicy&, const SelectionPolicy&) = default;
};

/// {"policy": "random" | "ibl", "seed": int, "params": {...}}
nlohmann::json to_json(const SelectionPolicy& policy);
SelectionPolicy policy_from_json(const nlohmann::json& doc);

/// The option that misclassifies `email`.
ibl::OptionId incorrect_option(const EmailRecord& email);

/// Single-attribute probe carrying the email's embedding.
ibl::AttributeVector email_probe(const EmailRecord& email, const EmbeddingTable& embeddings);

/// Uniform draw from `unseen`, which loses the drawn email.
EmailRecord next_email_random(std::vector<EmailRecord>& unseen, Rng& rng);

struct IblSelection {
  std::size_t index = 0;  // position in the unseen list
  /// Noise-free blended value of the incorrect option, per unseen email.
  std::vector<double> scores;
  /// Softmax probability of the incorrect option (reported only), when requested.
  std::vector<double> misclassification;
};

/// Scores every unseen email by the traced model's blended value for
/// misclassifying it at trial `t` and returns the highest-scoring one
/// (ties go to the lowest email id). Does not modify `traced_memory`.
IblSelection next_email_ibl(const ibl::MemoryStore& traced_memory, std::span<const EmailRecord> unseen,
                            const EmbeddingTable& embeddings, ibl::Trial t,
                            bool with_misclassification = false);

}  // namespace phishtrain
