#include "lercause/service.hpp"

#include <charconv>
#include <stdexcept>

#include "httplib.h"

namespace lercause::service {

using annotation::AnnotationStore;
using nlohmann::json;

std::pair<std::string, int> parse_bind(const std::string& bind) {
  const auto colon = bind.rfind(':');
  const std::string host = colon == std::string::npos ? "127.0.0.1" : bind.substr(0, colon);
  const std::string port_text = colon == std::string::npos ? bind : bind.substr(colon + 1);
  int port = -1;
  const auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc() || ptr != port_text.data() + port_text.size() || port < 0 || port > 65535 || host.empty()) {
    throw std::invalid_argument("--bind expects host:port, got '" + bind + "'");
  }
  return {host, port};
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, const json& fields = nullptr) {
  json body = {{"error", message}};
  if (!fields.is_null()) body["fields"] = fields;
  send_json(res, status, body);
}

std::size_t parse_count(const std::string& text, const char* name, std::size_t fallback) {
  if (text.empty()) return fallback;
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument(std::string(name) + " must be a non-negative integer");
  }
  return value;
}

std::optional<bool> parse_flag(const std::string& text) {
  if (text.empty()) return std::nullopt;
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("annotated must be true or false");
}

}  // namespace

struct AnnotationServer::Impl {
  AnnotationStore& store;
  httplib::Server server;

  explicit Impl(AnnotationStore& s) : store(s) {}
};

AnnotationServer::AnnotationServer(AnnotationStore& store, std::optional<std::string> static_dir)
    : impl_(std::make_unique<Impl>(store)) {
  auto& server = impl_->server;
  auto& st = impl_->store;

  server.Get("/records", [&st](const httplib::Request& req, httplib::Response& res) {
    try {
      annotation::RecordFilter filter;
      if (const auto label = req.get_param_value("label"); !label.empty()) filter.label = corpus::parse_label(label);
      filter.annotated = parse_flag(req.get_param_value("annotated"));
      if (const auto doc = req.get_param_value("doc_id"); !doc.empty()) filter.doc_id = doc;
      const auto page = parse_count(req.get_param_value("page"), "page", 1);
      const auto page_size = parse_count(req.get_param_value("page_size"), "page_size", 20);
      if (page_size == 0) throw std::invalid_argument("page_size must be positive");
      send_json(res, 200, annotation::to_json(st.list(filter, page, page_size)));
    } catch (const std::exception& e) {
      send_error(res, 400, e.what());
    }
  });

  server.Get(R"(/records/([^/]+))", [&st](const httplib::Request& req, httplib::Response& res) {
    const auto view = st.get(req.matches[1]);
    if (!view) return send_error(res, 404, "no record with id " + std::string(req.matches[1]));
    send_json(res, 200, annotation::to_json(*view));
  });

  server.Post(R"(/records/([^/]+)/annotation)", [&st](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    if (!st.get(id)) return send_error(res, 404, "no record with id " + id);
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      return send_error(res, 400, std::string("malformed JSON body: ") + e.what());
    }
    try {
      const auto record = st.submit(annotation::annotation_from_json(body, id));
      send_json(res, 200, corpus::to_json(record));
    } catch (const annotation::NotFound& e) {
      send_error(res, 404, e.what());
    } catch (const annotation::ValidationError& e) {
      send_error(res, 422, "annotation violates record invariants", json(e.fields()));
    } catch (const std::exception& e) {
      send_error(res, 500, e.what());
    }
  });

  server.Get("/export", [&st](const httplib::Request&, httplib::Response& res) {
    res.set_content(st.export_corpus(), "application/x-ndjson");
  });

  server.Get("/stats", [&st](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, annotation::to_json(st.stats()));
  });

  if (static_dir && !server.set_mount_point("/", *static_dir)) {
    throw std::invalid_argument("static directory " + *static_dir + " does not exist");
  }
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool AnnotationServer::listen_after_bind() { return impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void AnnotationServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace lercause::service
