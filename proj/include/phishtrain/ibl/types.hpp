#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace phishtrain::ibl {

/// Trial index. Occurrences and probe times are counted in trials, starting at 1;
/// index 0 is reserved for prepopulated instances.
using Trial = std::int64_t;

/// A decision option, identified by its ordinal within a fixed option set.
struct OptionId {
  std::uint32_t value = 0;

  friend constexpr auto operator<=>(OptionId, OptionId) = default;
};

inline constexpr OptionId kPhishing{0};
inline constexpr OptionId kHam{1};
inline constexpr std::size_t kBinaryOptionCount = 2;

std::string_view option_name(OptionId option);
OptionId parse_option(std::string_view name);

struct ScalarAttribute {
  double value = 0.0;

  friend bool operator==(const ScalarAttribute&, const ScalarAttribute&) = default;
};

/// An embedding-valued attribute. `id` names the source item (an email id);
/// two attributes with the same non-empty id are the same attribute value.
struct EmbeddingAttribute {
  std::string id;
  std::vector<double> values;
  double norm = 0.0;

  friend bool operator==(const EmbeddingAttribute&, const EmbeddingAttribute&) = default;
};

using Attribute = std::variant<ScalarAttribute, EmbeddingAttribute>;
using AttributeVector = std::vector<Attribute>;

/// Builds an embedding attribute, computing its norm. Throws on zero vectors.
EmbeddingAttribute make_embedding_attribute(std::string id, std::vector<double> values);

/// Similarity in [0, 1] between two attribute values of the same kind.
/// Embeddings use the clamped cosine; scalars use max(0, 1 - |a - b|).
double attribute_similarity(const Attribute& probe, const Attribute& stored);

bool same_attribute_value(const Attribute& a, const Attribute& b);

struct IBLParams {
  double decay = 0.5;
  double mismatch = 1.0;
  double noise = 0.25;
  /// Retrieval temperature. When unset it follows noise * sqrt(2).
  std::optional<double> temperature;
  double choice_temperature = 0.25;
  double default_utility = 1.0;
  /// Per-attribute weights; attributes past the end weigh 1.
  std::vector<double> weights;

  double retrieval_temperature() const;
  double weight(std::size_t attribute) const {
    return attribute < weights.size() ? weights[attribute] : 1.0;
  }
  /// Throws Error(kInvalidArgument) when any parameter is out of its domain.
  void validate() const;

  friend bool operator==(const IBLParams&, const IBLParams&) = default;
};

struct Instance {
  OptionId option;
  AttributeVector attributes;
  double utility = 0.0;
  std::vector<Trial> occurrences;
  bool prepopulated = false;

  friend bool operator==(const Instance&, const Instance&) = default;
};

enum class ChoiceMode { kArgmax, kSoftmax };

struct Choice {
  OptionId option;
  std::vector<double> values;
  std::vector<double> distribution;
};

}  // namespace phishtrain::ibl
