#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "phishtrain/corpus.hpp"
#include "phishtrain/embeddings.hpp"
#include "phishtrain/ibl/memory.hpp"
#include "phishtrain/protocol.hpp"
#include "phishtrain/rng.hpp"
#include "phishtrain/selection.hpp"

namespace phishtrain::service {

enum class EventKind { kCreated, kEmailServed, kResponse, kQuestionnaire, kCompleted };

std::string_view to_string(EventKind kind);
EventKind parse_event_kind(std::string_view text);

/// One line of a session's append-only log. Sequence numbers start at 1 and
/// have no gaps; `at_ms` is wall-clock milliseconds since the epoch.
struct SessionEvent {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::kCreated;
  std::int64_t at_ms = 0;
  nlohmann::json data = nlohmann::json::object();
};

nlohmann::json to_json(const SessionEvent& event);
SessionEvent event_from_json(const nlohmann::json& doc);

/// The post-read actions offered to trainees when none are configured.
std::vector<std::string> default_actions();

/// Read-only context shared by every session: the corpus split by condition,
/// its embeddings, the trial protocol and the response vocabulary.
class Environment {
 public:
  Environment(std::vector<EmailRecord> corpus, EmbeddingTable embeddings, ProtocolConfig protocol = {},
              std::vector<std::string> actions = default_actions());

  const ConditionSet& condition_set(Condition condition) const;
  const EmbeddingTable& embeddings() const { return embeddings_; }
  const ProtocolConfig& protocol() const { return protocol_; }
  const std::vector<std::string>& actions() const { return actions_; }
  /// Stable digest of ids, labels and conditions; a log replayed against a
  /// different corpus is rejected.
  const std::string& fingerprint() const { return fingerprint_; }

  int confidence_min = 1;
  int confidence_max = 5;

 private:
  std::map<Condition, ConditionSet> sets_;
  EmbeddingTable embeddings_;
  ProtocolConfig protocol_;
  std::vector<std::string> actions_;
  std::string fingerprint_;
};

struct ResponseInput {
  ibl::Trial trial = 0;
  ibl::OptionId classification;
  int confidence = 0;
  std::string action;
  std::optional<double> response_ms;
};

/// Deterministic choice of the next email, computed without touching state.
struct Pick {
  std::string email_id;
  std::size_t unseen_index = 0;  // meaningful for feedback-block picks only
  std::optional<Rng> schedule_after;
};

/// One trainee's run through the protocol, rebuilt purely from its events.
///
/// Commands come in two halves: plan_* validates a request against the
/// current state and produces the event that would record it; apply()
/// mutates. The store writes the event to disk between the two, so anything
/// a client was told is already durable, and replaying the log re-executes
/// the same transitions (including email selection) in the same order.
class Session {
 public:
  static SessionEvent creation_event(const Environment& env, const std::string& id, Condition condition,
                                     const SelectionPolicy& policy, std::uint64_t seed, std::int64_t at_ms);
  Session(std::shared_ptr<const Environment> env, const SessionEvent& created);

  SessionEvent plan_next(std::int64_t at_ms, Pick* pick = nullptr) const;
  SessionEvent plan_response(const ResponseInput& input, std::int64_t at_ms) const;
  SessionEvent plan_questionnaire(const std::array<double, 4>& answers, std::int64_t at_ms) const;
  /// The COMPLETED event due after the final response, if it is due.
  std::optional<SessionEvent> plan_completion(std::int64_t at_ms) const;

  /// Applies the next event. `pick`, when given, is the selection plan_next
  /// already computed; otherwise the selection is recomputed and must match
  /// the logged email.
  void apply(const SessionEvent& event, const Pick* pick = nullptr);

  const std::string& id() const { return id_; }
  std::uint64_t last_seq() const { return last_seq_; }
  bool completed() const { return completed_; }
  bool awaiting_response() const { return pending_.has_value(); }
  ibl::Trial next_trial_index() const;
  const std::vector<TrialRecord>& trials() const { return trials_; }
  double points() const { return points_; }

  /// Label-free view of the trial waiting for a response.
  nlohmann::json served_payload() const;
  /// What a trainee is told after responding to `trial`.
  nlohmann::json response_payload(ibl::Trial trial) const;
  nlohmann::json descriptor() const;
  /// Improvement statistics, phishing rate and the trial log; completed sessions only.
  nlohmann::json summary() const;
  /// Canonical serialization of the whole state; two sessions built from the
  /// same events serialize to the same bytes.
  nlohmann::json state_json() const;

 private:
  Pick pick_next() const;
  const EmailRecord& email(const std::string& id) const;

  std::shared_ptr<const Environment> env_;
  std::string id_;
  Condition condition_;
  SelectionPolicy policy_;
  ProtocolConfig protocol_;
  std::uint64_t seed_ = 0;
  std::int64_t created_at_ = 0;
  std::int64_t updated_at_ = 0;
  std::uint64_t last_seq_ = 0;

  std::map<std::string, std::size_t> index_;  // email id -> position in the condition set
  std::vector<std::string> pre_;
  std::vector<std::string> post_;
  std::vector<EmailRecord> unseen_;
  Rng schedule_;
  std::optional<ibl::MemoryStore> teacher_;

  struct Pending {
    ibl::Trial trial;
    std::string email_id;
  };
  std::optional<Pending> pending_;
  std::vector<TrialRecord> trials_;
  std::vector<std::string> actions_;  // parallel to trials_
  double points_ = 0.0;
  bool completed_ = false;
  std::optional<std::array<double, 4>> questionnaire_;
};

}  // namespace phishtrain::service
