#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "phishtrain/embeddings.hpp"
#include "phishtrain/ibl/types.hpp"

namespace phishtrain {

enum class Author { kHuman, kGpt4 };
enum class Style { kPlain, kGpt4Styled };

std::string_view to_string(Author author);
std::string_view to_string(Style style);
Author parse_author(std::string_view text);
Style parse_style(std::string_view text);

/// One cell of the author x style design.
struct Condition {
  Author author = Author::kHuman;
  Style style = Style::kPlain;

  friend constexpr auto operator<=>(const Condition&, const Condition&) = default;
};

/// "AUTHOR/STYLE", e.g. "HUMAN/GPT4_STYLED".
std::string to_string(Condition condition);
Condition parse_condition(std::string_view text);
constexpr std::array<Condition, 4> kAllConditions{{{Author::kHuman, Style::kPlain},
                                                   {Author::kHuman, Style::kGpt4Styled},
                                                   {Author::kGpt4, Style::kPlain},
                                                   {Author::kGpt4, Style::kGpt4Styled}}};

struct EmailRecord {
  std::string id;
  std::string base_id;
  Author author = Author::kHuman;
  Style style = Style::kPlain;
  ibl::OptionId label = ibl::kHam;
  std::string subject;
  std::string sender;
  std::string body_plain;
  std::optional<std::string> body_markup;
  std::vector<std::string> cue_tags;

  Condition condition() const { return {author, style}; }
  bool is_phishing() const { return label == ibl::kPhishing; }

  friend bool operator==(const EmailRecord&, const EmailRecord&) = default;
};

struct ConditionSet {
  Condition condition;
  std::vector<EmailRecord> emails;
};

nlohmann::json to_json(const EmailRecord& record);
EmailRecord email_from_json(const nlohmann::json& doc);

/// Checks every corpus invariant and throws one Error(kValidation) listing all
/// violations with the offending ids.
void validate_corpus(std::span<const EmailRecord> corpus);

std::vector<EmailRecord> parse_corpus(const nlohmann::json& doc);
std::vector<EmailRecord> load_corpus(const std::filesystem::path& path);
void save_corpus(std::span<const EmailRecord> corpus, const std::filesystem::path& path);

/// All and only the records of one condition, sorted by id. Throws on an
/// empty or label-imbalanced result.
ConditionSet condition_subset(std::span<const EmailRecord> corpus, Condition condition);

/// Throws Error(kMissingEmbedding) naming the first email without a vector.
void require_embeddings(std::span<const EmailRecord> emails, const EmbeddingTable& table);

/// The text sent to an embedding provider: subject, newline, plain body.
std::string embedding_text(const EmailRecord& record);

struct SynthOptions {
  std::size_t dim = 64;
  /// Emails per latent cluster; every cluster is label-pure.
  std::size_t cluster_size = 20;
  /// Spread of emails around their cluster centre.
  double within_cluster_noise = 0.12;
  /// Spread of the four variants of one base email around it.
  double variant_noise = 0.05;
  /// Weight of a direction shared by every email (raises all cosines).
  double shared_weight = 0.0;
  /// Weight of a per-label direction (same-label clusters lean together).
  double label_weight = 0.0;
  /// Cosine between each phishing cluster centre and its ham look-alike
  /// centre; 0 draws the centres independently.
  double twin_similarity = 0.0;
};

struct SynthCorpus {
  std::vector<EmailRecord> emails;
  EmbeddingTable embeddings;
};

/// Deterministic synthetic corpus: n_base x 4 records with alternating labels
/// and clustered embeddings. Throws for odd n_base.
SynthCorpus synth_corpus(std::uint64_t seed, std::size_t n_base, const SynthOptions& options = {});

}  // namespace phishtrain
