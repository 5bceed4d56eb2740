#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "hilml/augment.hpp"
#include "hilml/search.hpp"

namespace hilml {

struct ServiceConfig {
  std::filesystem::path session_root = "sessions";
  std::optional<std::filesystem::path> corpus_dir;
  std::uint64_t seed = 0;  // default search seed
  unsigned workers = 0;    // search workers; 0 = hardware concurrency
};

/// Reads HILML_SESSION_ROOT, HILML_CORPUS and HILML_SEED over `base`.
ServiceConfig config_from_env(ServiceConfig base = {});

struct Request {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct Response {
  int status = 200;
  Json body;
};

struct Session;

/// The session API.  Every request is answered with JSON; failures carry
/// {"error": {code, message, details}} and the status of their error code.
/// Sessions live under `session_root/<id>/` and are reloaded on first use
/// after a restart.
class Service {
 public:
  explicit Service(ServiceConfig config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  Response handle(const Request& request);

  const ServiceConfig& config() const { return config_; }
  const Corpus& corpus() const { return corpus_; }

  /// Blocks until every search started by this instance has finished.
  void wait_idle();

 private:
  std::shared_ptr<Session> session(const std::string& id);
  Json route(const Request& request, int& status);

  ServiceConfig config_;
  Corpus corpus_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// HTTP transport over Service::handle.
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();

  /// Serves on a background thread; port 0 picks a free port.  Returns the
  /// bound port, or -1 when the address cannot be bound.
  int start(const std::string& host, int port);
  /// Serves on the calling thread until stop().  False if binding fails.
  bool run(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// "host:port" (host defaults to 127.0.0.1).
std::pair<std::string, int> parse_listen(const std::string& listen);

}  // namespace hilml
