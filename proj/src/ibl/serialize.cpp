#include <sstream>

#include "phishtrain/embeddings.hpp"
#include "phishtrain/error.hpp"
#include "phishtrain/ibl/memory.hpp"

namespace phishtrain::ibl {

using nlohmann::json;

namespace {

json params_to_json(const IBLParams& p) {
  json j{{"decay", p.decay},
         {"mismatch", p.mismatch},
         {"noise", p.noise},
         {"temperature", nullptr},
         {"choice_temperature", p.choice_temperature},
         {"default_utility", p.default_utility},
         {"weights", p.weights}};
  if (p.temperature) j["temperature"] = *p.temperature;
  return j;
}

json option_to_json(OptionId option, std::size_t option_count) {
  if (option_count == kBinaryOptionCount) return option_name(option);
  return option.value;
}

OptionId option_from_json(const json& j) {
  if (j.is_string()) return parse_option(j.get<std::string>());
  return OptionId{j.get<std::uint32_t>()};
}

json attribute_to_json(const Attribute& a) {
  if (const auto* e = std::get_if<EmbeddingAttribute>(&a)) {
    return json{{"kind", "embedding"}, {"id", e->id}, {"values", e->values}};
  }
  return json{{"kind", "scalar"}, {"value", std::get<ScalarAttribute>(a).value}};
}

Attribute attribute_from_json(const json& j) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "embedding") {
    return make_embedding_attribute(j.value("id", std::string{}),
                                    j.at("values").get<std::vector<double>>());
  }
  if (kind == "scalar") return ScalarAttribute{j.at("value").get<double>()};
  throw Error(ErrorCode::kMalformedRecord, "unknown attribute kind '" + kind + "'");
}

bool compactable(const Instance& inst) {
  if (inst.attributes.size() != 1) return false;
  const auto* e = std::get_if<EmbeddingAttribute>(&inst.attributes.front());
  return e && !e->id.empty();
}

}  // namespace

IBLParams params_from_json(const json& j) {
  IBLParams p;
  p.decay = j.value("decay", p.decay);
  p.mismatch = j.value("mismatch", p.mismatch);
  p.noise = j.value("noise", p.noise);
  if (j.contains("temperature") && !j["temperature"].is_null()) p.temperature = j["temperature"].get<double>();
  p.choice_temperature = j.value("choice_temperature", p.choice_temperature);
  p.default_utility = j.value("default_utility", p.default_utility);
  if (j.contains("weights")) p.weights = j["weights"].get<std::vector<double>>();
  p.validate();
  return p;
}

json params_json(const IBLParams& p) { return params_to_json(p); }

json MemoryStore::to_json(bool compact) const {
  std::ostringstream rng_state;
  rng_state << rng_;
  json instances = json::array();
  for (const auto& group : by_option_) {
    for (const auto& inst : group) {
      json rec{{"option", option_to_json(inst.option, by_option_.size())},
               {"utility", inst.utility},
               {"occurrences", inst.occurrences},
               {"prepopulated", inst.prepopulated}};
      if (compact && compactable(inst)) {
        rec["email_id"] = std::get<EmbeddingAttribute>(inst.attributes.front()).id;
      } else {
        json attrs = json::array();
        for (const auto& a : inst.attributes) attrs.push_back(attribute_to_json(a));
        rec["attributes"] = std::move(attrs);
      }
      instances.push_back(std::move(rec));
    }
  }
  return json{{"params", params_to_json(params_)},
              {"option_count", by_option_.size()},
              {"t", now_},
              {"seed", seed_},
              {"rng_state", rng_state.str()},
              {"instances", std::move(instances)}};
}

MemoryStore MemoryStore::from_json(const json& doc, const EmbeddingTable* table) {
  try {
    MemoryStore store(params_from_json(doc.at("params")), doc.value("option_count", kBinaryOptionCount),
                      doc.at("seed").get<std::uint64_t>(), false);
    store.now_ = doc.at("t").get<Trial>();
    if (doc.contains("rng_state")) {
      std::istringstream in(doc["rng_state"].get<std::string>());
      in >> store.rng_;
      if (!in) throw Error(ErrorCode::kMalformedRecord, "corrupt rng_state");
    }
    for (const auto& rec : doc.at("instances")) {
      Instance inst;
      inst.option = option_from_json(rec.at("option"));
      store.check_option(inst.option);
      inst.utility = rec.at("utility").get<double>();
      inst.occurrences = rec.at("occurrences").get<std::vector<Trial>>();
      inst.prepopulated = rec.value("prepopulated", false);
      if (rec.contains("email_id")) {
        if (!table) {
          throw Error(ErrorCode::kMissingEmbedding,
                      "memory dump references email ids; an embedding table is required");
        }
        const auto id = rec["email_id"].get<std::string>();
        auto v = table->vector(id);
        inst.attributes.push_back(make_embedding_attribute(id, {v.begin(), v.end()}));
      } else if (rec.contains("attributes")) {
        for (const auto& a : rec["attributes"]) inst.attributes.push_back(attribute_from_json(a));
      }
      if (inst.occurrences.empty()) {
        throw Error(ErrorCode::kMalformedRecord, "instance without occurrences");
      }
      for (std::size_t i = 1; i < inst.occurrences.size(); ++i) {
        if (inst.occurrences[i] <= inst.occurrences[i - 1]) {
          throw Error(ErrorCode::kMalformedRecord, "occurrences must be strictly increasing");
        }
      }
      if (inst.occurrences.back() > store.now_) {
        throw Error(ErrorCode::kMalformedRecord, "occurrence after the memory clock");
      }
      store.by_option_[inst.option.value].push_back(std::move(inst));
    }
    return store;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedRecord, std::string("memory dump: ") + e.what());
  }
}

bool operator==(const MemoryStore& a, const MemoryStore& b) {
  return a.params_ == b.params_ && a.by_option_ == b.by_option_ && a.now_ == b.now_ &&
         a.seed_ == b.seed_ && a.rng_ == b.rng_;
}

}  // namespace phishtrain::ibl
