#include "phishtrain/embeddings.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "phishtrain/error.hpp"
#include "phishtrain/simd/kernels.hpp"

namespace phishtrain {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimMismatch, "cosine_similarity: dims " + std::to_string(a.size()) +
                                             " and " + std::to_string(b.size()) + " differ");
  }
  const double na = simd::squared_norm(a);
  const double nb = simd::squared_norm(b);
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::kZeroVector, "cosine_similarity: zero vector");
  const double c = simd::dot(a, b) / (std::sqrt(na) * std::sqrt(nb));
  return std::clamp(c, -1.0, 1.0);
}

double similarity_01(std::span<const double> a, std::span<const double> b) {
  return clamp_similarity(cosine_similarity(a, b));
}

void EmbeddingTable::add(std::string id, std::span<const double> values) {
  if (index_.contains(id)) throw Error(ErrorCode::kDuplicateId, "duplicate embedding id '" + id + "'");
  if (values.empty()) throw Error(ErrorCode::kMalformedRecord, "embedding '" + id + "' is empty");
  if (!ids_.empty() && values.size() != dim_) {
    throw Error(ErrorCode::kDimMismatch, "embedding '" + id + "' has dim " +
                                             std::to_string(values.size()) + ", table dim is " +
                                             std::to_string(dim_));
  }
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::kMalformedRecord, "embedding '" + id + "' has a non-finite value");
    }
  }
  const double norm = std::sqrt(simd::squared_norm(values));
  if (norm == 0.0) throw Error(ErrorCode::kZeroVector, "embedding '" + id + "' is the zero vector");
  dim_ = values.size();
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  values_.insert(values_.end(), values.begin(), values.end());
  norms_.push_back(norm);
}

bool EmbeddingTable::contains(std::string_view id) const { return index_.contains(std::string(id)); }

std::optional<std::size_t> EmbeddingTable::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const double> EmbeddingTable::vector(std::string_view id) const {
  auto idx = index_of(id);
  if (!idx) throw Error(ErrorCode::kMissingEmbedding, "no embedding for email '" + std::string(id) + "'");
  return row(*idx);
}

std::span<const double> EmbeddingTable::row(std::size_t index) const {
  if (index >= ids_.size()) throw Error(ErrorCode::kOutOfRange, "embedding row out of range");
  return {values_.data() + index * dim_, dim_};
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open embeddings file " + path.string());
  EmbeddingTable table(EmbeddingTable::Provenance::kFile);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::kMalformedRecord, path.string() + ":" + std::to_string(line_no) +
                                                   ": invalid JSON (" + e.what() + ")");
    }
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string() ||
        !rec.contains("vector") || !rec["vector"].is_array()) {
      throw Error(ErrorCode::kMalformedRecord,
                  path.string() + ":" + std::to_string(line_no) +
                      ": expected {\"id\": string, \"vector\": [numbers]}");
    }
    std::vector<double> values;
    values.reserve(rec["vector"].size());
    for (const auto& v : rec["vector"]) {
      if (!v.is_number()) {
        throw Error(ErrorCode::kMalformedRecord,
                    path.string() + ":" + std::to_string(line_no) + ": non-numeric vector entry");
      }
      values.push_back(v.get<double>());
    }
    table.add(rec["id"].get<std::string>(), values);
  }
  return table;
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    for (std::size_t i = 0; i < table.size(); ++i) {
      auto row = table.row(i);
      nlohmann::json rec{{"id", table.id(i)}, {"vector", std::vector<double>(row.begin(), row.end())}};
      out << rec.dump() << '\n';
    }
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace phishtrain
