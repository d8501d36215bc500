#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace phishtrain {

struct EmbeddingVector {
  std::string email_id;
  std::vector<double> values;
};

/// (a.b) / (|a| |b|). Throws on length mismatch or a zero vector.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Cosine similarity clamped into [0, 1].
double similarity_01(std::span<const double> a, std::span<const double> b);

/// Clamps a raw cosine into [0, 1].
inline double clamp_similarity(double cosine) {
  return cosine <= 0.0 ? 0.0 : (cosine >= 1.0 ? 1.0 : cosine);
}

/// Embeddings keyed by email id, stored as a dense row-major matrix.
class EmbeddingTable {
 public:
  enum class Provenance { kFile, kProvider };

  EmbeddingTable() = default;
  explicit EmbeddingTable(Provenance provenance) : provenance_(provenance) {}

  /// Appends one vector. Throws on duplicate id, dim mismatch, non-finite or zero vectors.
  void add(std::string id, std::span<const double> values);

  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  Provenance provenance() const noexcept { return provenance_; }
  void set_provenance(Provenance p) noexcept { provenance_ = p; }

  bool contains(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;
  /// Throws Error(kMissingEmbedding) for unknown ids.
  std::span<const double> vector(std::string_view id) const;
  std::span<const double> row(std::size_t index) const;
  const std::string& id(std::size_t index) const { return ids_.at(index); }
  double norm(std::size_t index) const { return norms_.at(index); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.values_ == b.values_;
  }

 private:
  Provenance provenance_ = Provenance::kFile;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> values_;
  std::vector<double> norms_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Reads a JSON-lines file of {"id": string, "vector": [numbers]}.
EmbeddingTable load_embeddings(const std::filesystem::path& path);

/// Writes the table as JSON lines via a temporary file and rename.
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);

/// Connection settings for an external embedding provider.
struct ProviderConfig {
  std::string endpoint;  // e.g. https://host/v1/embeddings
  std::string token;
  std::string model;
  std::filesystem::path cache_path;
  std::size_t batch_size = 64;
  std::size_t max_concurrency = 4;
  int max_attempts = 3;
  double initial_backoff_seconds = 0.5;
  double timeout_seconds = 60.0;

  /// Fills unset fields from PHISHTRAIN_EMBED_URL / _TOKEN / _MODEL.
  static ProviderConfig from_env();
};

struct FetchStats {
  std::size_t cache_hits = 0;
  std::size_t fetched = 0;
  std::size_t requests = 0;
};

/// Returns one vector per (id, text), served from the cache when present and
/// fetched from the provider otherwise. New vectors are appended to the cache
/// atomically, and only when every request succeeded.
EmbeddingTable fetch_embeddings(const ProviderConfig& config,
                                std::span<const std::pair<std::string, std::string>> texts,
                                FetchStats* stats = nullptr);

}  // namespace phishtrain
