#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phishtrain/service/session.hpp"

namespace phishtrain::service {

/// Append-only JSONL file holding one session's events.
class EventLog {
 public:
  EventLog(const std::filesystem::path& path, bool sync);
  ~EventLog();
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  /// Writes one event as a single line; returns once the bytes are handed to
  /// the kernel (and flushed to the device when `sync` is set).
  void append(const SessionEvent& event);

 private:
  int fd_ = -1;
  bool sync_ = false;
  std::filesystem::path path_;
};

struct LoadedLog {
  std::vector<SessionEvent> events;
  /// Bytes of an unterminated final line (a write cut short by a crash).
  std::size_t torn_bytes = 0;
};

/// Reads a session log. A final line without its newline is reported as torn
/// and ignored; any other unparsable line is corruption and throws.
LoadedLog read_log(const std::filesystem::path& path);

/// Rebuilds a session by re-executing its events in order.
Session replay(std::shared_ptr<const Environment> env, const std::vector<SessionEvent>& events);

struct StoreOptions {
  std::filesystem::path data_dir;
  /// fdatasync after every event. Off only for tests and throwaway runs.
  bool sync_writes = true;
  /// Milliseconds since the epoch; injectable for deterministic tests.
  std::function<std::int64_t()> clock;
  /// When set, session ids and default seeds derive from it instead of the OS entropy source.
  std::optional<std::uint64_t> id_seed;
};

/// All live sessions, each behind its own mutex, persisted under data_dir as
/// `<session_id>.jsonl`. Every mutation is appended to the log before it is
/// applied in memory or acknowledged to the caller.
class SessionStore {
 public:
  SessionStore(std::shared_ptr<const Environment> env, StoreOptions options);

  /// Replays every log in the data directory, truncating torn tails.
  /// Returns the number of sessions loaded.
  std::size_t recover();

  nlohmann::json create(Condition condition, const SelectionPolicy& policy,
                        std::optional<std::uint64_t> seed = std::nullopt);
  nlohmann::json next(const std::string& id);
  nlohmann::json respond(const std::string& id, const ResponseInput& input);
  nlohmann::json questionnaire(const std::string& id, const std::array<double, 4>& answers);
  nlohmann::json summary(const std::string& id);
  nlohmann::json descriptor(const std::string& id);
  /// Canonical in-memory state, for replay checks.
  nlohmann::json state(const std::string& id);

  std::vector<std::string> ids() const;
  const Environment& environment() const { return *env_; }
  std::filesystem::path log_path(const std::string& id) const;

  static bool valid_id(const std::string& id);

 private:
  struct Entry {
    Entry(Session s, std::unique_ptr<EventLog> l) : session(std::move(s)), log(std::move(l)) {}
    std::mutex mutex;
    Session session;
    std::unique_ptr<EventLog> log;
    // Written once, before `frozen` is released; read without the mutex afterwards.
    std::shared_ptr<const nlohmann::json> final_summary;
    std::atomic<bool> frozen{false};
  };

  std::shared_ptr<Entry> find(const std::string& id) const;
  void commit(Entry& entry, const SessionEvent& event, const Pick* pick = nullptr);
  void freeze_if_final(Entry& entry);
  std::uint64_t next_random();
  std::int64_t now() const;

  std::shared_ptr<const Environment> env_;
  StoreOptions options_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::mutex id_mutex_;
  std::uint64_t id_counter_ = 0;
};

}  // namespace phishtrain::service
