#include "awtite/service.hpp"

#include <httplib.h>

#include "awtite/error.hpp"

namespace awtite::service {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";

void send(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  send(res, status, {{"code", code}, {"message", message}});
}

int status_of(conduct::ServiceError::Code c) {
  switch (c) {
    case conduct::ServiceError::Code::Invalid: return 400;
    case conduct::ServiceError::Code::NotFound: return 404;
    case conduct::ServiceError::Code::Conflict: return 409;
  }
  return 500;
}

json parse_body(const httplib::Request& req) {
  try {
    return json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw conduct::ServiceError(conduct::ServiceError::Code::Invalid, std::string("malformed JSON body: ") + e.what());
  }
}

template <class F>
httplib::Server::Handler guarded(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const conduct::ServiceError& e) {
      send_error(res, status_of(e.code()), e.code_name(), e.what());
    } catch (const NumericalFailure& e) {
      send_error(res, 500, "numerical-failure", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  };
}

}  // namespace

struct Server::Impl {
  conduct::EventStore& store;
  ServerOptions options;
  httplib::Server http;
  int bound_port = -1;

  Impl(conduct::EventStore& s, ServerOptions o) : store(s), options(std::move(o)) {
    // SO_REUSEADDR without SO_REUSEPORT
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
    });
    routes();
  }

  void routes() {
    const std::string id = "([A-Za-z0-9][A-Za-z0-9._-]*)";

    http.Post("/trials", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const conduct::TrialSettings s = store.create_trial(parse_body(req));
      res.set_header("Location", "/trials/" + s.id);
      send(res, 201, store.trial_state(s.id));
    }));

    http.Get("/trials", guarded([this](const httplib::Request&, httplib::Response& res) {
      json list = json::array();
      for (const auto& s : store.list_trials()) {
        list.push_back({{"id", s.id},
                        {"name", s.name},
                        {"design", std::string(designs::to_string(s.design.design))},
                        {"time_unit", std::string(conduct::to_string(s.unit))}});
      }
      send(res, 200, {{"trials", list}});
    }));

    http.Post("/trials/" + id + "/events", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto r = store.append(req.matches[1], conduct::event_from_json(parse_body(req)));
      send(res, r.duplicate ? 200 : 201, {{"seq", r.seq}, {"duplicate", r.duplicate}});
    }));

    http.Get("/trials/" + id + "/state", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send(res, 200, store.trial_state(req.matches[1]));
    }));

    http.Get("/trials/" + id + "/recommendation",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
               std::optional<conduct::Timestamp> as_of;
               if (req.has_param("asOf")) as_of = conduct::parse_timestamp(req.get_param_value("asOf"));
               const std::string trial = req.matches[1];
               send(res, 200, store.recommendation_json(trial, store.recommend(trial, as_of)));
             }));

    http.Post("/trials/" + id + "/what-if", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      if (!body.is_object()) throw conduct::ServiceError(conduct::ServiceError::Code::Invalid, "expected an object");
      std::vector<conduct::Event> events;
      std::optional<conduct::Timestamp> as_of;
      for (const auto& item : body.items()) {
        if (item.key() == "events") {
          if (!item.value().is_array()) {
            throw conduct::ServiceError(conduct::ServiceError::Code::Invalid, "/events: expected an array");
          }
          for (std::size_t i = 0; i < item.value().size(); ++i) {
            events.push_back(conduct::event_from_json(item.value()[i], "/events/" + std::to_string(i)));
          }
        } else if (item.key() == "asOf") {
          if (!item.value().is_string()) {
            throw conduct::ServiceError(conduct::ServiceError::Code::Invalid, "/asOf: expected a timestamp string");
          }
          as_of = conduct::parse_timestamp(item.value().get<std::string>());
        } else {
          throw conduct::ServiceError(conduct::ServiceError::Code::Invalid, "/" + item.key() + ": unknown key");
        }
      }
      const std::string trial = req.matches[1];
      send(res, 200, store.recommendation_json(trial, store.what_if(trial, std::move(events), as_of)));
    }));

    if (!options.static_dir.empty()) http.set_mount_point("/", options.static_dir.string());

    http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
      send_error(res, res.status, res.status == 404 ? "not-found" : "error",
                 res.status == 404 ? "no route for " + req.method + " " + req.path : "request failed");
      return httplib::Server::HandlerResponse::Handled;
    });
  }
};

Server::Server(conduct::EventStore& store, ServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {}

Server::~Server() = default;

bool Server::bind() {
  if (impl_->options.port == 0) {
    impl_->bound_port = impl_->http.bind_to_any_port(impl_->options.host);
    return impl_->bound_port > 0;
  }
  if (!impl_->http.bind_to_port(impl_->options.host, impl_->options.port)) return false;
  impl_->bound_port = impl_->options.port;
  return true;
}

int Server::port() const noexcept { return impl_->bound_port; }

bool Server::listen() { return impl_->http.listen_after_bind(); }

void Server::stop() { impl_->http.stop(); }

void Server::wait_until_ready() const { impl_->http.wait_until_ready(); }

}  // namespace awtite::service
