#pragma once

// HTTP front end for the live-trial store.
//
//   POST /trials                         create a trial           201
//   GET  /trials                         list trials              200
//   POST /trials/{id}/events             append an event          201 (200 for a repeated dedupe token)
//   GET  /trials/{id}/state              state and full event log 200
//   GET  /trials/{id}/recommendation     ?asOf=ISO-8601           200
//   POST /trials/{id}/what-if            {"events": [...], "asOf"?} 200
//
// Errors come back as {"code", "message"} with status 400, 404 or 409.

#include <filesystem>
#include <memory>
#include <string>

#include "awtite/conduct.hpp"

namespace awtite::service {

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path static_dir;  // served at / when set
};

class Server {
 public:
  Server(conduct::EventStore& store, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // False when the address cannot be bound (typically: port in use).
  bool bind();
  int port() const noexcept;
  // Serves until stop(); requires a successful bind().
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace awtite::service
