#pragma once

// Drives scripted trainees through a SessionStore, records where every event
// ends on disk, and rebuilds stores from truncated copies of the logs.

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phishtrain/corpus.hpp"
#include "phishtrain/service/store.hpp"

namespace harness {

using namespace phishtrain;
using nlohmann::json;
namespace fs = std::filesystem;

inline std::shared_ptr<service::Environment> environment(std::uint64_t seed = 7, std::size_t n_base = 80) {
  auto c = synth_corpus(seed, n_base);
  return std::make_shared<service::Environment>(std::move(c.emails), std::move(c.embeddings));
}

inline service::StoreOptions options(const fs::path& dir, std::uint64_t id_seed = 1) {
  service::StoreOptions o;
  o.data_dir = dir;
  o.sync_writes = false;
  o.id_seed = id_seed;
  o.clock = [n = std::make_shared<std::int64_t>(1'700'000'000'000)] { return (*n)++; };
  return o;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << bytes;
}

/// Every JSON document a trainee's client received during a session.
struct Transcript {
  std::vector<json> served;     // GET next
  std::vector<json> responses;  // POST response
  std::vector<std::string> served_email_ids;
};

/// One scripted trainee. Each step issues exactly one mutating request and
/// records the log size and canonical state after it.
struct ScriptedSession {
  std::string id;
  std::vector<std::size_t> log_sizes;  // after each step
  std::vector<std::string> states;     // state_json().dump() after each step
  Transcript transcript;
  bool finished = false;
};

inline bool step(service::SessionStore& store, ScriptedSession& s, std::mt19937_64& rng) {
  const json d = store.descriptor(s.id);
  if (d["completed"].get<bool>()) {
    if (d["questionnaire_submitted"].get<bool>()) return false;
    std::array<double, 4> answers{};
    for (auto& a : answers) a = static_cast<double>(rng() % 101);
    store.questionnaire(s.id, answers);
  } else if (d["awaiting_response"].get<bool>()) {
    service::ResponseInput in;
    in.trial = d["trial"].get<ibl::Trial>();
    in.classification = rng() % 2 ? ibl::kPhishing : ibl::kHam;
    in.confidence = 1 + static_cast<int>(rng() % 5);
    in.action = store.environment().actions()[rng() % store.environment().actions().size()];
    if (rng() % 2) in.response_ms = static_cast<double>(rng() % 20000);
    s.transcript.responses.push_back(store.respond(s.id, in));
  } else {
    s.transcript.served.push_back(store.next(s.id));
    s.transcript.served_email_ids.push_back(store.state(s.id)["pending"]["email_id"].get<std::string>());
  }
  s.log_sizes.push_back(fs::file_size(store.log_path(s.id)));
  s.states.push_back(store.state(s.id).dump());
  return true;
}

inline ScriptedSession run_script(service::SessionStore& store, Condition condition, const SelectionPolicy& policy,
                                  std::uint64_t seed, std::mt19937_64& rng) {
  ScriptedSession s;
  s.id = store.create(condition, policy, seed)["session_id"].get<std::string>();
  s.log_sizes.push_back(fs::file_size(store.log_path(s.id)));
  s.states.push_back(store.state(s.id).dump());
  while (step(store, s, rng)) {
  }
  s.finished = true;
  return s;
}

/// Keys that would reveal ground truth or identify the email server-side.
inline const std::set<std::string>& forbidden_keys() {
  static const std::set<std::string> keys{"label", "true_label", "is_phishing", "cue_tags", "email_id",
                                          "id", "base_id", "correct_option", "answer"};
  return keys;
}

/// Returns a description of the first leak found in `doc`, or "".
inline std::string find_leak(const json& doc, const EmailRecord& email, bool feedback_allowed) {
  std::string found;
  std::function<void(const json&)> walk = [&](const json& j) {
    if (!found.empty()) return;
    if (j.is_object()) {
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (forbidden_keys().count(it.key())) found = "key '" + it.key() + "'";
        if (!feedback_allowed && it.key() == "correct") found = "correctness outside feedback";
        walk(it.value());
      }
    } else if (j.is_array()) {
      for (const auto& v : j) walk(v);
    } else if (j.is_string()) {
      const auto& s = j.get_ref<const std::string&>();
      if (s == "PHISHING" || s == "HAM" || s == "phishing" || s == "ham") found = "label value '" + s + "'";
      if (s.find(email.id) != std::string::npos) found = "email id";
      if (s.find(email.base_id + "-") != std::string::npos) found = "base id";
      for (const auto& tag : email.cue_tags) {
        if (s == tag) found = "cue tag '" + tag + "'";
      }
    }
  };
  walk(doc);
  return found;
}

}  // namespace harness
