#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "lercause/annotation.hpp"

namespace lercause::service {

/// Splits "host:port"; a bare port binds 127.0.0.1. Throws std::invalid_argument.
std::pair<std::string, int> parse_bind(const std::string& bind);

/// HTTP front end over an AnnotationStore:
///   GET  /records?label=&annotated=&doc_id=&page=&page_size=
///   GET  /records/{id}
///   POST /records/{id}/annotation
///   GET  /export
///   GET  /stats
/// Static UI assets are served from `static_dir` at "/" when given.
class AnnotationServer {
 public:
  AnnotationServer(annotation::AnnotationStore& store, std::optional<std::string> static_dir = std::nullopt);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Port 0 picks a free port. Returns the bound port, or -1 on failure.
  int bind(const std::string& host, int port);
  /// Blocks until stop() is called.
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace lercause::service
