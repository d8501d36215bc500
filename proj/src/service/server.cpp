#include "phishtrain/service/server.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

namespace phishtrain::service {

using nlohmann::json;

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kConflict:
    case ErrorCode::kSessionComplete:
    case ErrorCode::kSessionIncomplete:
      return 409;
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kOutOfRange:
    case ErrorCode::kMalformedRecord:
    case ErrorCode::kValidation:
      return 400;
    case ErrorCode::kInsufficientEmails:
    case ErrorCode::kEmptySet:
      return 422;
    case ErrorCode::kAuth:
      return 401;
    case ErrorCode::kTransient:
      return 503;
    default:
      return 500;
  }
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send_json(res, status, json{{"code", code}, {"message", message}});
}

// Every handler runs inside this so the error shape is uniform.
template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const Error& e) {
      send_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "invalid_argument", std::string("bad request body: ") + e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json body = json::parse(req.body);
  if (!body.is_object()) throw Error(ErrorCode::kInvalidArgument, "request body must be a JSON object");
  return body;
}

}  // namespace

Server::Server(std::shared_ptr<SessionStore> store, ServerConfig config)
    : store_(std::move(store)), config_(std::move(config)), http_(std::make_unique<httplib::Server>()) {
  // httplib defaults to SO_REUSEPORT, which would let a second instance
  // silently share the port (and its sessions' data directory).
  http_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  install_routes();
  if (config_.static_dir) {
    if (!http_->set_mount_point("/", config_.static_dir->string())) {
      throw Error(ErrorCode::kIo, "static directory " + config_.static_dir->string() + " does not exist");
    }
  }
}

Server::~Server() { stop(); }

void Server::install_routes() {
  auto& store = *store_;
  const SelectionPolicy default_policy = config_.default_policy;

  http_->Get("/healthz", guarded([&store](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, json{{"status", "ok"}, {"sessions", store.ids().size()}});
  }));

  http_->Get("/config", guarded([&store](const httplib::Request&, httplib::Response& res) {
    const auto& env = store.environment();
    json conditions = json::array();
    for (const Condition c : kAllConditions) {
      try {
        env.condition_set(c);
        conditions.push_back(to_string(c));
      } catch (const Error&) {
      }
    }
    send_json(res, 200,
              json{{"conditions", conditions},
                   {"actions", env.actions()},
                   {"confidence", {{"min", env.confidence_min}, {"max", env.confidence_max}}},
                   {"protocol", to_json(env.protocol())},
                   {"classifications", {"PHISHING", "HAM"}}});
  }));

  http_->Post("/sessions", guarded([&store, default_policy](const httplib::Request& req, httplib::Response& res) {
    const json body = parse_body(req);
    if (!body.contains("condition")) throw Error(ErrorCode::kInvalidArgument, "'condition' is required");
    const Condition condition = parse_condition(body["condition"].get<std::string>());
    SelectionPolicy policy = default_policy;
    if (body.contains("policy")) {
      const json& p = body["policy"];
      if (p.is_string()) {
        policy.kind = parse_policy(p.get<std::string>());
      } else {
        policy = policy_from_json(p);
        if (!p.contains("params")) policy.params = default_policy.params;
      }
    }
    std::optional<std::uint64_t> seed;
    if (body.contains("seed") && !body["seed"].is_null()) seed = body["seed"].get<std::uint64_t>();
    send_json(res, 201, store.create(condition, policy, seed));
  }));

  const std::string id_pattern = "([A-Za-z0-9_-]{1,64})";

  http_->Get("/sessions/" + id_pattern, guarded([&store](const httplib::Request& req, httplib::Response& res) {
    send_json(res, 200, store.descriptor(req.matches[1]));
  }));

  http_->Get("/sessions/" + id_pattern + "/next",
             guarded([&store](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, store.next(req.matches[1]));
             }));

  http_->Post("/sessions/" + id_pattern + "/response",
              guarded([&store](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                ResponseInput input;
                input.trial = body.at("trial").get<ibl::Trial>();
                input.classification = ibl::parse_option(body.at("classification").get<std::string>());
                input.confidence = body.at("confidence").get<int>();
                input.action = body.at("action").get<std::string>();
                if (body.contains("response_ms") && !body["response_ms"].is_null()) {
                  input.response_ms = body["response_ms"].get<double>();
                }
                send_json(res, 200, store.respond(req.matches[1], input));
              }));

  http_->Post("/sessions/" + id_pattern + "/questionnaire",
              guarded([&store](const httplib::Request& req, httplib::Response& res) {
                const json body = parse_body(req);
                const auto& answers = body.at("answers");
                if (!answers.is_array() || answers.size() != 4) {
                  throw Error(ErrorCode::kInvalidArgument, "'answers' must hold exactly four numbers");
                }
                send_json(res, 200, store.questionnaire(req.matches[1], answers.get<std::array<double, 4>>()));
              }));

  http_->Get("/sessions/" + id_pattern + "/summary",
             guarded([&store](const httplib::Request& req, httplib::Response& res) {
               send_json(res, 200, store.summary(req.matches[1]));
             }));

  http_->set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    const std::string code = res.status == 404 ? "not_found" : "http_" + std::to_string(res.status);
    send_error(res, res.status, code, req.method + " " + req.path);
  });
}

int Server::bind() {
  if (config_.port == 0) {
    port_ = http_->bind_to_any_port(config_.host);
  } else if (http_->bind_to_port(config_.host, config_.port)) {
    port_ = config_.port;
  } else {
    port_ = -1;
  }
  if (port_ <= 0) {
    throw Error(ErrorCode::kIo, "cannot listen on " + config_.host + ":" + std::to_string(config_.port) +
                                    " (address in use or not permitted)");
  }
  return port_;
}

void Server::run() {
  if (port_ <= 0) throw Error(ErrorCode::kInvalidArgument, "bind() must succeed before run()");
  http_->listen_after_bind();
}

void Server::stop() {
  if (http_) http_->stop();
}

}  // namespace phishtrain::service
