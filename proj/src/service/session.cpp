#include "phishtrain/service/session.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "phishtrain/analysis.hpp"
#include "phishtrain/error.hpp"
#include "phishtrain/service/sanitize.hpp"

namespace phishtrain::service {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 5> kEventNames{{
    {EventKind::kCreated, "CREATED"},
    {EventKind::kEmailServed, "EMAIL_SERVED"},
    {EventKind::kResponse, "RESPONSE"},
    {EventKind::kQuestionnaire, "QUESTIONNAIRE"},
    {EventKind::kCompleted, "COMPLETED"},
}};

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string rng_text(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

[[noreturn]] void diverged(const std::string& what) {
  throw Error(ErrorCode::kValidation, "session log does not replay: " + what);
}

}  // namespace

std::string_view to_string(EventKind kind) {
  for (const auto& [k, name] : kEventNames) {
    if (k == kind) return name;
  }
  return "UNKNOWN";
}

EventKind parse_event_kind(std::string_view text) {
  for (const auto& [k, name] : kEventNames) {
    if (name == text) return k;
  }
  throw Error(ErrorCode::kMalformedRecord, "unknown event kind '" + std::string(text) + "'");
}

json to_json(const SessionEvent& event) {
  return json{{"seq", event.seq}, {"kind", to_string(event.kind)}, {"at", event.at_ms}, {"data", event.data}};
}

SessionEvent event_from_json(const json& doc) {
  try {
    SessionEvent e;
    e.seq = doc.at("seq").get<std::uint64_t>();
    e.kind = parse_event_kind(doc.at("kind").get<std::string>());
    e.at_ms = doc.at("at").get<std::int64_t>();
    e.data = doc.at("data");
    if (!e.data.is_object()) throw Error(ErrorCode::kMalformedRecord, "event data must be an object");
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kMalformedRecord, std::string("malformed session event: ") + ex.what());
  }
}

std::vector<std::string> default_actions() { return {"reply", "click link", "delete", "report", "ignore"}; }

Environment::Environment(std::vector<EmailRecord> corpus, EmbeddingTable embeddings, ProtocolConfig protocol,
                         std::vector<std::string> actions)
    : embeddings_(std::move(embeddings)), protocol_(protocol), actions_(std::move(actions)) {
  protocol_.validate();
  if (actions_.empty()) throw Error(ErrorCode::kInvalidArgument, "the action list must not be empty");
  std::string digest;
  for (const Condition c : kAllConditions) {
    const bool present = std::any_of(corpus.begin(), corpus.end(), [&](const EmailRecord& e) {
      return e.author == c.author && e.style == c.style;
    });
    if (!present) continue;
    auto set = condition_subset(corpus, c);
    require_embeddings(set.emails, embeddings_);
    digest += to_string(c) + "\n";
    for (const auto& e : set.emails) digest += e.id + "\t" + std::string(ibl::option_name(e.label)) + "\n";
    sets_.emplace(c, std::move(set));
  }
  if (sets_.empty()) throw Error(ErrorCode::kEmptySet, "the corpus is empty");
  fingerprint_ = fnv1a_hex(digest);
}

const ConditionSet& Environment::condition_set(Condition condition) const {
  const auto it = sets_.find(condition);
  if (it == sets_.end()) {
    throw Error(ErrorCode::kInvalidArgument, "the corpus has no emails for condition " + to_string(condition));
  }
  return it->second;
}

SessionEvent Session::creation_event(const Environment& env, const std::string& id, Condition condition,
                                     const SelectionPolicy& policy, std::uint64_t seed, std::int64_t at_ms) {
  const auto& set = env.condition_set(condition);
  const auto needed = static_cast<std::size_t>(env.protocol().total());
  if (set.emails.size() < needed) {
    throw Error(ErrorCode::kInsufficientEmails, "condition " + to_string(condition) + " has " +
                                                    std::to_string(set.emails.size()) +
                                                    " emails; a session needs " + std::to_string(needed));
  }
  policy.params.validate();
  SessionEvent e;
  e.seq = 1;
  e.kind = EventKind::kCreated;
  e.at_ms = at_ms;
  e.data = json{{"session_id", id},
                {"condition", to_string(condition)},
                {"policy", to_json(policy)},
                {"seed", seed},
                {"protocol", to_json(env.protocol())},
                {"corpus", env.fingerprint()}};
  return e;
}

Session::Session(std::shared_ptr<const Environment> env, const SessionEvent& created) : env_(std::move(env)) {
  if (created.kind != EventKind::kCreated || created.seq != 1) {
    diverged("the first event must be CREATED with sequence number 1");
  }
  try {
    id_ = created.data.at("session_id").get<std::string>();
    condition_ = parse_condition(created.data.at("condition").get<std::string>());
    policy_ = policy_from_json(created.data.at("policy"));
    protocol_ = protocol_from_json(created.data.at("protocol"));
    seed_ = created.data.at("seed").get<std::uint64_t>();
    if (created.data.at("corpus").get<std::string>() != env_->fingerprint()) {
      diverged("it was recorded against a different corpus");
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kMalformedRecord, std::string("malformed CREATED event: ") + ex.what());
  }
  created_at_ = updated_at_ = created.at_ms;
  last_seq_ = 1;

  const auto& set = env_->condition_set(condition_);
  if (set.emails.size() < static_cast<std::size_t>(protocol_.total())) {
    throw Error(ErrorCode::kInsufficientEmails, "condition pool too small for the session protocol");
  }
  for (std::size_t i = 0; i < set.emails.size(); ++i) index_.emplace(set.emails[i].id, i);

  // Same draw order as the simulator: pre block, post block, then the
  // feedback block from whatever is left.
  schedule_ = Rng(derive_seed(seed_, {1}));
  unseen_ = set.emails;
  for (int i = 0; i < protocol_.n_pre; ++i) pre_.push_back(next_email_random(unseen_, schedule_).id);
  for (int i = 0; i < protocol_.n_post; ++i) post_.push_back(next_email_random(unseen_, schedule_).id);
  if (policy_.kind == PolicyKind::kIblSelection) {
    teacher_.emplace(policy_.params, ibl::kBinaryOptionCount, derive_seed(seed_, {3}));
  }
}

const EmailRecord& Session::email(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) diverged("unknown email '" + id + "'");
  return env_->condition_set(condition_).emails[it->second];
}

ibl::Trial Session::next_trial_index() const { return static_cast<ibl::Trial>(trials_.size()) + 1; }

Pick Session::pick_next() const {
  const ibl::Trial t = next_trial_index();
  Pick pick;
  switch (block_of(protocol_, t)) {
    case Block::kPre:
      pick.email_id = pre_[static_cast<std::size_t>(t - 1)];
      break;
    case Block::kPost:
      pick.email_id = post_[static_cast<std::size_t>(t - 1 - protocol_.n_pre - protocol_.n_train)];
      break;
    case Block::kTrain:
      if (teacher_) {
        pick.unseen_index = next_email_ibl(*teacher_, unseen_, env_->embeddings(), t).index;
      } else {
        Rng rng = schedule_;
        pick.unseen_index = uniform_index(rng, unseen_.size());
        pick.schedule_after = rng;
      }
      pick.email_id = unseen_[pick.unseen_index].id;
      break;
  }
  return pick;
}

SessionEvent Session::plan_next(std::int64_t at_ms, Pick* pick) const {
  if (completed_ || trials_.size() >= static_cast<std::size_t>(protocol_.total())) {
    throw Error(ErrorCode::kSessionComplete, "session " + id_ + " has finished all trials");
  }
  if (pending_) {
    throw Error(ErrorCode::kConflict,
                "trial " + std::to_string(pending_->trial) + " has been served but not answered");
  }
  Pick p = pick_next();
  SessionEvent e;
  e.seq = last_seq_ + 1;
  e.kind = EventKind::kEmailServed;
  e.at_ms = at_ms;
  e.data = json{{"trial", next_trial_index()}, {"email_id", p.email_id}};
  if (pick) *pick = std::move(p);
  return e;
}

SessionEvent Session::plan_response(const ResponseInput& input, std::int64_t at_ms) const {
  if (input.trial >= 1 && input.trial <= static_cast<ibl::Trial>(trials_.size())) {
    throw Error(ErrorCode::kConflict, "trial " + std::to_string(input.trial) + " was already answered");
  }
  if (!pending_ || pending_->trial != input.trial) {
    throw Error(ErrorCode::kConflict, "trial " + std::to_string(input.trial) + " is not awaiting a response");
  }
  if (input.confidence < env_->confidence_min || input.confidence > env_->confidence_max) {
    throw Error(ErrorCode::kOutOfRange, "confidence must be in [" + std::to_string(env_->confidence_min) + ", " +
                                            std::to_string(env_->confidence_max) + "]");
  }
  const auto& actions = env_->actions();
  if (std::find(actions.begin(), actions.end(), input.action) == actions.end()) {
    throw Error(ErrorCode::kInvalidArgument, "unknown action '" + input.action + "'");
  }
  if (input.response_ms && (!std::isfinite(*input.response_ms) || *input.response_ms < 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "response_ms must be a non-negative number");
  }
  if (input.classification.value >= ibl::kBinaryOptionCount) {
    throw Error(ErrorCode::kInvalidArgument, "classification must be PHISHING or HAM");
  }
  SessionEvent e;
  e.seq = last_seq_ + 1;
  e.kind = EventKind::kResponse;
  e.at_ms = at_ms;
  e.data = json{{"trial", input.trial},
                {"classification", ibl::option_name(input.classification)},
                {"confidence", input.confidence},
                {"action", input.action}};
  if (input.response_ms) e.data["response_ms"] = *input.response_ms;
  return e;
}

SessionEvent Session::plan_questionnaire(const std::array<double, 4>& answers, std::int64_t at_ms) const {
  if (!completed_) throw Error(ErrorCode::kSessionIncomplete, "the questionnaire follows the last trial");
  if (questionnaire_) throw Error(ErrorCode::kConflict, "the questionnaire was already submitted");
  const double score = ai_identification_score(answers);  // validates the range
  SessionEvent e;
  e.seq = last_seq_ + 1;
  e.kind = EventKind::kQuestionnaire;
  e.at_ms = at_ms;
  e.data = json{{"answers", answers}, {"score", score}};
  return e;
}

std::optional<SessionEvent> Session::plan_completion(std::int64_t at_ms) const {
  if (completed_ || pending_ || trials_.size() != static_cast<std::size_t>(protocol_.total())) return std::nullopt;
  SessionEvent e;
  e.seq = last_seq_ + 1;
  e.kind = EventKind::kCompleted;
  e.at_ms = at_ms;
  return e;
}

void Session::apply(const SessionEvent& event, const Pick* pick) {
  if (event.seq != last_seq_ + 1) {
    diverged("expected sequence number " + std::to_string(last_seq_ + 1) + ", found " + std::to_string(event.seq));
  }
  try {
    switch (event.kind) {
      case EventKind::kCreated:
        diverged("a second CREATED event");
      case EventKind::kEmailServed: {
        if (completed_ || pending_ || trials_.size() >= static_cast<std::size_t>(protocol_.total())) {
          diverged("EMAIL_SERVED while no trial is due");
        }
        const ibl::Trial t = event.data.at("trial").get<ibl::Trial>();
        if (t != next_trial_index()) diverged("EMAIL_SERVED for trial " + std::to_string(t));
        const Pick p = pick ? *pick : pick_next();
        const auto logged = event.data.at("email_id").get<std::string>();
        if (p.email_id != logged) {
          diverged("trial " + std::to_string(t) + " selects " + p.email_id + " but the log has " + logged);
        }
        if (block_of(protocol_, t) == Block::kTrain) {
          unseen_.erase(unseen_.begin() + static_cast<std::ptrdiff_t>(p.unseen_index));
          if (p.schedule_after) schedule_ = *p.schedule_after;
        }
        pending_ = Pending{t, logged};
        break;
      }
      case EventKind::kResponse: {
        const ibl::Trial t = event.data.at("trial").get<ibl::Trial>();
        if (!pending_ || pending_->trial != t) diverged("RESPONSE for unserved trial " + std::to_string(t));
        const EmailRecord& e = email(pending_->email_id);
        TrialRecord rec;
        rec.index = t;
        rec.block = block_of(protocol_, t);
        rec.email_id = e.id;
        rec.true_label = e.label;
        rec.response = ibl::parse_option(event.data.at("classification").get<std::string>());
        rec.correct = rec.response == e.label;
        rec.confidence = event.data.at("confidence").get<int>();
        if (event.data.contains("response_ms")) rec.response_ms = event.data["response_ms"].get<double>();
        if (rec.block == Block::kTrain) {
          const double points = rec.correct ? protocol_.reward_correct : protocol_.reward_incorrect;
          rec.points = points;
          points_ += points;
          if (teacher_) teacher_->record_outcome(rec.response, email_probe(e, env_->embeddings()), points, t);
        } else if (teacher_) {
          teacher_->advance_to(t);
        }
        trials_.push_back(std::move(rec));
        actions_.push_back(event.data.at("action").get<std::string>());
        pending_.reset();
        break;
      }
      case EventKind::kCompleted:
        if (completed_ || pending_ || trials_.size() != static_cast<std::size_t>(protocol_.total())) {
          diverged("COMPLETED before the last trial");
        }
        completed_ = true;
        break;
      case EventKind::kQuestionnaire: {
        if (!completed_ || questionnaire_) diverged("QUESTIONNAIRE out of order");
        questionnaire_ = event.data.at("answers").get<std::array<double, 4>>();
        ai_identification_score(*questionnaire_);
        break;
      }
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::kMalformedRecord, "malformed " + std::string(to_string(event.kind)) +
                                                 " event " + std::to_string(event.seq) + ": " + ex.what());
  }
  last_seq_ = event.seq;
  updated_at_ = event.at_ms;
}

json Session::served_payload() const {
  if (!pending_) throw Error(ErrorCode::kConflict, "no trial is waiting for a response");
  const EmailRecord& e = email(pending_->email_id);
  const Block block = block_of(protocol_, pending_->trial);
  // Only what the trainee would see in a mail client; ids, cue tags and the
  // label stay server-side.
  json mail{{"subject", e.subject}, {"sender", e.sender}, {"body_plain", e.body_plain}, {"body_markup", nullptr}};
  if (e.body_markup) mail["body_markup"] = sanitize_markup(*e.body_markup);
  return json{{"session_id", id_},
              {"trial", pending_->trial},
              {"total_trials", protocol_.total()},
              {"block", to_string(block)},
              {"feedback", block == Block::kTrain},
              {"points", points_},
              {"email", std::move(mail)}};
}

json Session::response_payload(ibl::Trial trial) const {
  if (trial < 1 || trial > static_cast<ibl::Trial>(trials_.size())) {
    throw Error(ErrorCode::kOutOfRange, "trial " + std::to_string(trial) + " has no response");
  }
  const TrialRecord& rec = trials_[static_cast<std::size_t>(trial - 1)];
  json out{{"session_id", id_},
           {"trial", trial},
           {"block", to_string(rec.block)},
           {"points", points_},
           {"completed", completed_}};
  if (rec.block == Block::kTrain) {
    out["feedback"] = json{{"correct", rec.correct}, {"points", *rec.points}};
  } else {
    out["feedback"] = "none";
  }
  return out;
}

json Session::descriptor() const {
  const bool done = trials_.size() >= static_cast<std::size_t>(protocol_.total());
  return json{{"session_id", id_},
              {"condition", to_string(condition_)},
              {"policy", to_string(policy_.kind)},
              {"trial", done ? json(nullptr) : json(next_trial_index())},
              {"block", done ? json(nullptr) : json(to_string(block_of(protocol_, next_trial_index())))},
              {"total_trials", protocol_.total()},
              {"awaiting_response", pending_.has_value()},
              {"completed", completed_},
              {"questionnaire_submitted", questionnaire_.has_value()}};
}

json Session::summary() const {
  if (!completed_) {
    throw Error(ErrorCode::kSessionIncomplete, "session " + id_ + " has " + std::to_string(trials_.size()) +
                                                   " of " + std::to_string(protocol_.total()) + " trials");
  }
  json trials = json::array();
  for (std::size_t i = 0; i < trials_.size(); ++i) {
    json t = to_json(trials_[i]);
    t["action"] = actions_[i];
    trials.push_back(std::move(t));
  }
  json questionnaire = nullptr;
  if (questionnaire_) {
    questionnaire = json{{"answers", *questionnaire_}, {"score", ai_identification_score(*questionnaire_)}};
  }
  return json{{"session_id", id_},
              {"condition", to_string(condition_)},
              {"policy", to_string(policy_.kind)},
              {"improvement", to_json(improvement_stats(trials_))},
              {"phishing_rate", phishing_rate(trials_)},
              {"points", points_},
              {"questionnaire", std::move(questionnaire)},
              {"trials", std::move(trials)}};
}

json Session::state_json() const {
  json trials = json::array();
  for (std::size_t i = 0; i < trials_.size(); ++i) {
    json t = to_json(trials_[i]);
    t["action"] = actions_[i];
    trials.push_back(std::move(t));
  }
  json unseen = json::array();
  for (const auto& e : unseen_) unseen.push_back(e.id);
  return json{{"session_id", id_},
              {"condition", to_string(condition_)},
              {"policy", to_json(policy_)},
              {"protocol", to_json(protocol_)},
              {"seed", seed_},
              {"created_at", created_at_},
              {"updated_at", updated_at_},
              {"last_seq", last_seq_},
              {"pre", pre_},
              {"post", post_},
              {"unseen", std::move(unseen)},
              {"schedule_rng", rng_text(schedule_)},
              {"teacher", teacher_ ? teacher_->to_json(true) : json(nullptr)},
              {"pending", pending_ ? json{{"trial", pending_->trial}, {"email_id", pending_->email_id}} : json(nullptr)},
              {"trials", std::move(trials)},
              {"points", points_},
              {"completed", completed_},
              {"questionnaire", questionnaire_ ? json(*questionnaire_) : json(nullptr)}};
}

}  // namespace phishtrain::service
