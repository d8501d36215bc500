#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <future>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "phishtrain/embeddings.hpp"
#include "phishtrain/error.hpp"

namespace phishtrain {

namespace {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "embedding endpoint must be an absolute URL: " + url);
  }
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

std::vector<std::vector<double>> parse_vectors(const std::string& body, std::size_t expected) {
  nlohmann::json doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::kMalformedRecord, "provider returned invalid JSON");
  std::vector<std::vector<double>> out;
  if (doc.contains("data") && doc["data"].is_array()) {
    out.resize(doc["data"].size());
    std::size_t pos = 0;
    for (const auto& item : doc["data"]) {
      const std::size_t idx = item.contains("index") ? item["index"].get<std::size_t>() : pos;
      if (idx >= out.size()) throw Error(ErrorCode::kMalformedRecord, "provider index out of range");
      out[idx] = item.at("embedding").get<std::vector<double>>();
      ++pos;
    }
  } else if (doc.contains("embeddings") && doc["embeddings"].is_array()) {
    out = doc["embeddings"].get<std::vector<std::vector<double>>>();
  } else {
    throw Error(ErrorCode::kMalformedRecord, "provider response has neither 'data' nor 'embeddings'");
  }
  if (out.size() != expected) {
    throw Error(ErrorCode::kMalformedRecord, "provider returned " + std::to_string(out.size()) +
                                                 " vectors for " + std::to_string(expected) + " inputs");
  }
  return out;
}

std::vector<std::vector<double>> request_batch(const ProviderConfig& config, const Endpoint& endpoint,
                                               const std::vector<std::string>& inputs,
                                               std::atomic<std::size_t>& requests) {
  nlohmann::json payload{{"input", inputs}};
  if (!config.model.empty()) payload["model"] = config.model;
  const std::string body = payload.dump();

  auto backoff = std::chrono::duration<double>(config.initial_backoff_seconds);
  std::string last_failure;
  for (int attempt = 1; attempt <= config.max_attempts; ++attempt) {
    httplib::Client client(endpoint.origin);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(config.timeout_seconds));
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    httplib::Headers headers;
    if (!config.token.empty()) headers.emplace("Authorization", "Bearer " + config.token);
    ++requests;
    auto res = client.Post(endpoint.path, headers, body, "application/json");
    if (res) {
      if (res->status == 200) return parse_vectors(res->body, inputs.size());
      if (res->status == 401 || res->status == 403) {
        throw Error(ErrorCode::kAuth, "embedding provider rejected credentials (HTTP " +
                                          std::to_string(res->status) + ")");
      }
      if (res->status != 429 && res->status < 500) {
        throw Error(ErrorCode::kInvalidArgument,
                    "embedding provider returned HTTP " + std::to_string(res->status));
      }
      last_failure = "HTTP " + std::to_string(res->status);
    } else {
      last_failure = httplib::to_string(res.error());
    }
    if (attempt < config.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorCode::kTransient, "embedding provider failed after " +
                                         std::to_string(config.max_attempts) +
                                         " attempts: " + last_failure);
}

}  // namespace

ProviderConfig ProviderConfig::from_env() {
  ProviderConfig config;
  if (const char* v = std::getenv("PHISHTRAIN_EMBED_URL")) config.endpoint = v;
  if (const char* v = std::getenv("PHISHTRAIN_EMBED_TOKEN")) config.token = v;
  if (const char* v = std::getenv("PHISHTRAIN_EMBED_MODEL")) config.model = v;
  return config;
}

EmbeddingTable fetch_embeddings(const ProviderConfig& config,
                                std::span<const std::pair<std::string, std::string>> texts,
                                FetchStats* stats) {
  EmbeddingTable cache(EmbeddingTable::Provenance::kProvider);
  if (!config.cache_path.empty() && std::filesystem::exists(config.cache_path)) {
    cache = load_embeddings(config.cache_path);
    cache.set_provenance(EmbeddingTable::Provenance::kProvider);
  }

  std::vector<std::size_t> missing;
  FetchStats local;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (cache.contains(texts[i].first)) {
      ++local.cache_hits;
    } else {
      missing.push_back(i);
    }
  }

  std::vector<std::vector<double>> fetched(texts.size());
  if (!missing.empty()) {
    if (config.endpoint.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "embedding endpoint not configured (set PHISHTRAIN_EMBED_URL)");
    }
    const Endpoint endpoint = split_endpoint(config.endpoint);
    const std::size_t batch = std::max<std::size_t>(1, config.batch_size);
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t begin = 0; begin < missing.size(); begin += batch) {
      batches.emplace_back(begin, std::min(missing.size(), begin + batch));
    }

    std::atomic<std::size_t> requests{0};
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> failures(batches.size());
    auto worker = [&] {
      for (std::size_t b = next++; b < batches.size(); b = next++) {
        try {
          std::vector<std::string> inputs;
          for (std::size_t k = batches[b].first; k < batches[b].second; ++k) {
            inputs.push_back(texts[missing[k]].second);
          }
          auto vectors = request_batch(config, endpoint, inputs, requests);
          for (std::size_t k = batches[b].first; k < batches[b].second; ++k) {
            fetched[missing[k]] = std::move(vectors[k - batches[b].first]);
          }
        } catch (...) {
          failures[b] = std::current_exception();
        }
      }
    };
    const std::size_t workers =
        std::clamp<std::size_t>(config.max_concurrency, 1, batches.size());
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    local.requests = requests.load();
    for (const auto& failure : failures) {
      if (failure) std::rethrow_exception(failure);
    }
    local.fetched = missing.size();
  }

  // Build the result and the extended cache before touching the cache file.
  EmbeddingTable result(EmbeddingTable::Provenance::kProvider);
  EmbeddingTable extended = cache;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    const auto& id = texts[i].first;
    if (cache.contains(id)) {
      result.add(id, cache.vector(id));
      continue;
    }
    if (!extended.empty() && fetched[i].size() != extended.dim()) {
      throw Error(ErrorCode::kDimMismatch, "provider dim " + std::to_string(fetched[i].size()) +
                                               " drifts from cached dim " +
                                               std::to_string(extended.dim()));
    }
    extended.add(id, fetched[i]);
    result.add(id, fetched[i]);
  }
  if (!config.cache_path.empty() && !missing.empty()) save_embeddings(extended, config.cache_path);
  if (stats) *stats = local;
  return result;
}

}  // namespace phishtrain
