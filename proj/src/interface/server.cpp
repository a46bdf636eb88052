#include "interface/server.hpp"

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <semaphore>
#include <thread>

#include <httplib.h>

#include "common/base64.hpp"
#include "common/random.hpp"
#include "mesh/obj_io.hpp"

namespace s3d {

using nlohmann::json;

json infer_response_json(const Mesh& mesh, double timing_ms, const std::string& checkpoint_id) {
  json vertices = json::array(), faces = json::array();
  for (const auto& v : mesh.vertices) vertices.push_back({v[0], v[1], v[2]});
  for (const auto& f : mesh.faces) faces.push_back({f[0], f[1], f[2]});
  return {{"vertices", std::move(vertices)},
          {"faces", std::move(faces)},
          {"timing_ms", timing_ms},
          {"checkpoint_id", checkpoint_id}};
}

void ServerOptions::apply_environment() {
  const char* env = std::getenv(kPortEnvVar);
  if (!env || !*env) return;
  char* end = nullptr;
  const long p = std::strtol(env, &end, 10);
  if (*end != '\0' || p < 0 || p > 65535) {
    throw InvalidArgument(std::string(kPortEnvVar) + " must be a port number, got '" + env + "'");
  }
  port = static_cast<int>(p);
}

void ServerOptions::validate() const {
  if (port < 0 || port > 65535) throw InvalidArgument("server: port must lie in [0,65535]");
  if (workers < 1) throw InvalidArgument("server: workers must be at least 1");
  if (max_queued < 1) throw InvalidArgument("server: max_queued must be at least 1");
  if (max_body_bytes < 1) throw InvalidArgument("server: max_body_bytes must be positive");
  if (host.empty()) throw InvalidArgument("server: host must not be empty");
}

void to_json(json& j, const ServerOptions& o) {
  j = {{"host", o.host},
       {"port", o.port},
       {"workers", o.workers},
       {"max_queued", o.max_queued},
       {"max_body_bytes", o.max_body_bytes},
       {"cors_origin", o.cors_origin}};
}

void from_json(const json& j, ServerOptions& o) {
  const ServerOptions d;
  o.host = j.value("host", d.host);
  o.port = j.value("port", d.port);
  o.workers = j.value("workers", d.workers);
  o.max_queued = j.value("max_queued", d.max_queued);
  o.max_body_bytes = j.value("max_body_bytes", d.max_body_bytes);
  o.cors_origin = j.value("cors_origin", d.cors_origin);
}

namespace {

thread_local std::chrono::steady_clock::time_point t_request_start;
thread_local bool t_request_started = false;

// Client errors carry their reason to the response body.
struct HttpError {
  int status;
  std::string reason;
};

void set_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

bool accepts_obj(const httplib::Request& req) {
  return req.get_header_value("Accept").find("model/obj") != std::string::npos;
}

std::vector<std::uint8_t> request_png(const httplib::Request& req) {
  const std::string type = req.get_header_value("Content-Type");
  if (type.rfind("image/png", 0) == 0) {
    if (req.body.empty()) throw HttpError{400, "empty request body"};
    return {req.body.begin(), req.body.end()};
  }
  if (type.rfind("application/json", 0) == 0) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      throw HttpError{400, std::string("malformed JSON: ") + e.what()};
    }
    if (!body.is_object() || !body.contains("image_base64") || !body["image_base64"].is_string()) {
      throw HttpError{400, "JSON body must be an object with a string field image_base64"};
    }
    try {
      return base64_decode(body["image_base64"].get<std::string>());
    } catch (const FormatError& e) {
      throw HttpError{400, e.what()};
    }
  }
  throw HttpError{415, "Content-Type must be image/png or application/json, got '" + type + "'"};
}

}  // namespace

struct InferenceServer::Impl {
  std::string checkpoint_id;
  InferFn infer;
  ServerOptions options;
  httplib::Server http;
  std::counting_semaphore<> slots;
  std::thread thread;
  std::atomic<int> port{-1};
  std::atomic<std::uint64_t> error_counter{0};
  std::mutex log_mutex;
  std::uint64_t error_salt;

  Impl(std::string id, InferFn fn, ServerOptions o)
      : checkpoint_id(std::move(id)),
        infer(std::move(fn)),
        options(std::move(o)),
        slots(options.workers),
        error_salt(std::random_device{}()) {
    setup();
  }

  void log_line(const json& entry) {
    const std::string line = entry.dump();
    std::lock_guard lock(log_mutex);
    if (options.log) {
      options.log(line);
    } else {
      std::cerr << line << '\n' << std::flush;
    }
  }

  std::string next_error_id() {
    const auto n = error_counter++;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(mix_seed(error_salt, n)));
    return buf;
  }

  void handle_infer(const httplib::Request& req, httplib::Response& res) {
    std::vector<std::uint8_t> png;
    InferenceResult result;
    try {
      png = request_png(req);
      slots.acquire();
      struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
      } release{slots};
      result = infer(png);
    } catch (const HttpError& e) {
      set_json(res, e.status, {{"error", e.reason}});
      return;
    } catch (const FormatError& e) {
      set_json(res, 400, {{"error", std::string("malformed image: ") + e.what()}});
      return;
    } catch (const InvalidArgument& e) {
      set_json(res, 400, {{"error", std::string("unusable image: ") + e.what()}});
      return;
    }
    if (accepts_obj(req)) {
      res.status = 200;
      res.set_content(format_obj(result.mesh), "model/obj");
      return;
    }
    set_json(res, 200, infer_response_json(result.mesh, result.timing_ms, checkpoint_id));
  }

  void setup() {
    const int threads = std::max(8, 2 * options.workers);
    const auto queued = static_cast<std::size_t>(options.max_queued);
    http.new_task_queue = [threads, queued] { return new httplib::ThreadPool(static_cast<std::size_t>(threads), queued); };
    http.set_payload_max_length(options.max_body_bytes);
    http.set_default_headers({{"Access-Control-Allow-Origin", options.cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type, Accept"},
                              {"Access-Control-Max-Age", "600"},
                              {"Vary", "Origin"}});

    http.set_pre_routing_handler([](const httplib::Request&, httplib::Response&) {
      t_request_start = std::chrono::steady_clock::now();
      t_request_started = true;
      return httplib::Server::HandlerResponse::Unhandled;
    });

    http.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
      set_json(res, 200, {{"status", "ok"}, {"checkpoint", checkpoint_id}});
    });
    http.Post("/api/infer", [this](const httplib::Request& req, httplib::Response& res) { handle_infer(req, res); });
    http.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    http.set_exception_handler([this](const httplib::Request& req, httplib::Response& res, std::exception_ptr ep) {
      const std::string id = next_error_id();
      std::string what = "unknown exception";
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        what = e.what();
      } catch (...) {
      }
      log_line({{"event", "internal_error"}, {"id", id}, {"path", req.path}, {"detail", what}});
      set_json(res, 500, {{"error", "internal error"}, {"id", id}});
    });

    // Responses without a body (404, 405, 413 from the transport) get a JSON reason.
    http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
      std::string reason = httplib::status_message(res.status);
      if (res.status == 413) reason = "request body exceeds the size limit";
      set_json(res, res.status, {{"error", reason}});
      return httplib::Server::HandlerResponse::Handled;
    });

    http.set_logger([this](const httplib::Request& req, const httplib::Response& res) {
      double ms = 0.0;
      if (t_request_started) {
        ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_request_start).count();
        t_request_started = false;
      }
      log_line({{"method", req.method}, {"path", req.path}, {"status", res.status}, {"ms", ms}});
    });
  }

  int bind() {
    const int p = options.port == 0 ? http.bind_to_any_port(options.host)
                                    : (http.bind_to_port(options.host, options.port) ? options.port : -1);
    if (p < 0) {
      throw IoError("server: cannot bind " + options.host + ":" + std::to_string(options.port));
    }
    port = p;
    return p;
  }
};

InferenceServer::InferenceServer(std::shared_ptr<const InferenceEngine> engine, ServerOptions options)
    : InferenceServer(engine ? engine->checkpoint_id() : std::string(),
                      engine ? InferFn([engine](std::span<const std::uint8_t> png) { return engine->infer_png(png); })
                             : InferFn(),
                      std::move(options)) {}

InferenceServer::InferenceServer(std::string checkpoint_id, InferFn infer, ServerOptions options) {
  if (!infer) throw InvalidArgument("server: no inference function");
  options.validate();
  impl_ = std::make_unique<Impl>(std::move(checkpoint_id), std::move(infer), std::move(options));
}

InferenceServer::~InferenceServer() { stop(); }

int InferenceServer::start() {
  if (impl_->thread.joinable()) throw InvalidArgument("server: already started");
  const int p = impl_->bind();
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
  return p;
}

void InferenceServer::run() {
  impl_->bind();
  impl_->http.listen_after_bind();
}

void InferenceServer::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int InferenceServer::port() const { return impl_->port; }
const ServerOptions& InferenceServer::options() const { return impl_->options; }

}  // namespace s3d
