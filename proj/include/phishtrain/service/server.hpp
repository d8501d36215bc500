#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "phishtrain/error.hpp"
#include "phishtrain/selection.hpp"
#include "phishtrain/service/store.hpp"

namespace httplib {
class Server;
}

namespace phishtrain::service {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  /// Directory served at "/" (the trainer UI build), if any.
  std::optional<std::filesystem::path> static_dir;
  /// Used when POST /sessions names only a policy kind or omits it.
  SelectionPolicy default_policy;
};

/// HTTP status for a library error code.
int http_status(ErrorCode code);

/// JSON API over a SessionStore:
///   POST /sessions                      {condition, policy?, seed?}
///   GET  /sessions/{id}                 progress descriptor
///   GET  /sessions/{id}/next            serve the next trial
///   POST /sessions/{id}/response        {trial, classification, confidence, action, response_ms?}
///   POST /sessions/{id}/questionnaire   {answers: [4 x 0..100]}
///   GET  /sessions/{id}/summary
///   GET  /config                        conditions, actions and confidence scale for clients
///   GET  /healthz
/// Failures are {code, message} with a matching status.
class Server {
 public:
  Server(std::shared_ptr<SessionStore> store, ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds the listening socket; throws kIo when the address is unavailable.
  /// Returns the bound port (useful when port 0 asked for any free port).
  int bind();
  /// Serves until stop(); bind() must have succeeded.
  void run();
  void stop();

 private:
  void install_routes();

  std::shared_ptr<SessionStore> store_;
  ServerConfig config_;
  std::unique_ptr<httplib::Server> http_;
  int port_ = -1;
};

}  // namespace phishtrain::service
