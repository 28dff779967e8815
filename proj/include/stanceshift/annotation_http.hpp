#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "stanceshift/annotation.hpp"

namespace httplib {
class Server;
}

namespace stanceshift {

/// JSON API over an AnnotationService, plus static hosting of the annotation UI.
///
///   POST /api/sessions                      {study_id, alias} -> 201
///   POST /api/sessions/{id}/acknowledge
///   GET  /api/sessions/{id}
///   GET  /api/sessions/{id}/next
///   POST /api/sessions/{id}/scores          {index, phase, value}
///   GET  /api/studies/{id}                  study summary
///   GET  /api/studies/{id}/export           application/x-ndjson
///
/// Errors are JSON objects {"error", "message"}.
class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationService& service, std::filesystem::path static_dir = {});
  ~AnnotationServer();

  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Binds to an ephemeral port and returns it.
  int bind_to_any_port(const std::string& host = "127.0.0.1");
  bool bind(const std::string& host, int port);
  /// Blocks until stop() is called.
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  void install_routes();

  AnnotationService& service_;
  std::filesystem::path static_dir_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace stanceshift
