#include "phishtrain/service/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "phishtrain/error.hpp"

namespace phishtrain::service {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

[[noreturn]] void io_error(const std::string& what, const fs::path& path) {
  throw Error(ErrorCode::kIo, what + " " + path.string() + ": " + std::strerror(errno));
}

void sync_directory(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

}  // namespace

EventLog::EventLog(const fs::path& path, bool sync) : sync_(sync), path_(path) {
  fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) io_error("cannot open session log", path);
}

EventLog::~EventLog() {
  if (fd_ >= 0) ::close(fd_);
}

void EventLog::append(const SessionEvent& event) {
  const std::string line = to_json(event).dump() + "\n";
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error("cannot append to session log", path_);
    }
    written += static_cast<std::size_t>(n);
  }
  if (sync_ && ::fdatasync(fd_) != 0) io_error("cannot sync session log", path_);
}

LoadedLog read_log(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read session log " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  LoadedLog out;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    const auto nl = text.find('\n', start);
    if (nl == std::string::npos) {
      out.torn_bytes = text.size() - start;
      break;
    }
    ++line_no;
    const std::string_view line(text.data() + start, nl - start);
    start = nl + 1;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& ex) {
      throw Error(ErrorCode::kMalformedRecord,
                  path.string() + " line " + std::to_string(line_no) + ": " + ex.what());
    }
    out.events.push_back(event_from_json(doc));
  }
  return out;
}

Session replay(std::shared_ptr<const Environment> env, const std::vector<SessionEvent>& events) {
  if (events.empty()) throw Error(ErrorCode::kMalformedRecord, "empty session log");
  Session session(std::move(env), events.front());
  for (std::size_t i = 1; i < events.size(); ++i) session.apply(events[i]);
  return session;
}

SessionStore::SessionStore(std::shared_ptr<const Environment> env, StoreOptions options)
    : env_(std::move(env)), options_(std::move(options)) {
  if (!options_.clock) {
    options_.clock = [] {
      return std::chrono::duration_cast<std::chrono::milliseconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
  std::error_code ec;
  fs::create_directories(options_.data_dir, ec);
  if (ec || !fs::is_directory(options_.data_dir)) {
    throw Error(ErrorCode::kIo, "data directory " + options_.data_dir.string() + " is not usable" +
                                    (ec ? ": " + ec.message() : std::string()));
  }
  // Fail at startup rather than on the first session.
  const fs::path probe = options_.data_dir / ".write-test";
  {
    std::ofstream out(probe);
    if (!out) throw Error(ErrorCode::kIo, "data directory " + options_.data_dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

bool SessionStore::valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
  });
}

fs::path SessionStore::log_path(const std::string& id) const { return options_.data_dir / (id + ".jsonl"); }

std::int64_t SessionStore::now() const { return options_.clock(); }

std::uint64_t SessionStore::next_random() {
  std::lock_guard lock(id_mutex_);
  if (options_.id_seed) return derive_seed(*options_.id_seed, {id_counter_++});
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

std::size_t SessionStore::recover() {
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(options_.data_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") logs.push_back(entry.path());
  }
  std::sort(logs.begin(), logs.end());

  std::size_t loaded = 0;
  for (const auto& path : logs) {
    const std::string id = path.stem().string();
    if (!valid_id(id)) continue;
    LoadedLog log = read_log(path);
    if (log.torn_bytes > 0) {
      // The tail was never acknowledged to anyone; drop it so appends resume on a line boundary.
      fs::resize_file(path, fs::file_size(path) - log.torn_bytes);
    }
    if (log.events.empty()) {
      fs::remove(path);
      continue;
    }
    Session session = replay(env_, log.events);
    if (session.id() != id) {
      throw Error(ErrorCode::kValidation, path.string() + " holds session " + session.id());
    }
    auto entry = std::make_shared<Entry>(std::move(session), std::make_unique<EventLog>(path, options_.sync_writes));
    freeze_if_final(*entry);
    std::unique_lock lock(map_mutex_);
    sessions_[id] = std::move(entry);
    ++loaded;
  }
  return loaded;
}

std::shared_ptr<SessionStore::Entry> SessionStore::find(const std::string& id) const {
  std::shared_lock lock(map_mutex_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::kNotFound, "no session '" + id + "'");
  return it->second;
}

std::vector<std::string> SessionStore::ids() const {
  std::shared_lock lock(map_mutex_);
  std::vector<std::string> out;
  for (const auto& [id, _] : sessions_) out.push_back(id);
  return out;
}

void SessionStore::commit(Entry& entry, const SessionEvent& event, const Pick* pick) {
  entry.log->append(event);
  entry.session.apply(event, pick);
}

void SessionStore::freeze_if_final(Entry& entry) {
  const auto d = entry.session.descriptor();
  if (entry.session.completed() && d["questionnaire_submitted"].get<bool>()) {
    entry.final_summary = std::make_shared<const json>(entry.session.summary());
    entry.frozen.store(true, std::memory_order_release);
  }
}

json SessionStore::create(Condition condition, const SelectionPolicy& policy, std::optional<std::uint64_t> seed) {
  std::string id;
  for (int attempt = 0;; ++attempt) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(next_random()));
    id = buf;
    std::shared_lock lock(map_mutex_);
    if (!sessions_.count(id) && !fs::exists(log_path(id))) break;
    if (attempt > 16) throw Error(ErrorCode::kConflict, "could not allocate a session id");
  }
  const std::uint64_t session_seed = seed ? *seed : next_random();
  const SessionEvent created = Session::creation_event(*env_, id, condition, policy, session_seed, now());
  Session session(env_, created);

  auto log = std::make_unique<EventLog>(log_path(id), options_.sync_writes);
  log->append(created);
  if (options_.sync_writes) sync_directory(options_.data_dir);
  auto entry = std::make_shared<Entry>(std::move(session), std::move(log));
  json out = entry->session.descriptor();
  std::unique_lock lock(map_mutex_);
  sessions_.emplace(id, std::move(entry));
  return out;
}

json SessionStore::next(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  Pick pick;
  const SessionEvent event = entry->session.plan_next(now(), &pick);
  commit(*entry, event, &pick);
  return entry->session.served_payload();
}

json SessionStore::respond(const std::string& id, const ResponseInput& input) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  commit(*entry, entry->session.plan_response(input, now()));
  if (auto done = entry->session.plan_completion(now())) commit(*entry, *done);
  return entry->session.response_payload(input.trial);
}

json SessionStore::questionnaire(const std::string& id, const std::array<double, 4>& answers) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  const SessionEvent event = entry->session.plan_questionnaire(answers, now());
  commit(*entry, event);
  freeze_if_final(*entry);
  return json{{"session_id", id}, {"answers", answers}, {"score", event.data["score"]}};
}

json SessionStore::summary(const std::string& id) {
  auto entry = find(id);
  if (entry->frozen.load(std::memory_order_acquire)) return *entry->final_summary;
  std::lock_guard lock(entry->mutex);
  return entry->session.summary();
}

json SessionStore::descriptor(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  return entry->session.descriptor();
}

json SessionStore::state(const std::string& id) {
  auto entry = find(id);
  std::lock_guard lock(entry->mutex);
  return entry->session.state_json();
}

}  // namespace phishtrain::service
