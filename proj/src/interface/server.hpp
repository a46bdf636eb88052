#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "pipeline/infer.hpp"

namespace s3d {

/// InferResponse body: {"checkpoint_id", "faces", "timing_ms", "vertices"}.
nlohmann::json infer_response_json(const Mesh& mesh, double timing_ms, const std::string& checkpoint_id);

inline constexpr const char* kPortEnvVar = "SKETCH3D_PORT";

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;                          // 0 picks a free port
  int workers = 2;                          // concurrent inferences
  int max_queued = 64;                      // connections waiting for a thread
  std::size_t max_body_bytes = 4u << 20;
  std::string cors_origin = "*";
  /// One JSON object per request, without trailing newline. Empty: stderr.
  std::function<void(const std::string&)> log;

  /// Replaces `port` with the value of SKETCH3D_PORT when that is set.
  /// Throws InvalidArgument for a malformed value.
  void apply_environment();
  void validate() const;
};

void to_json(nlohmann::json& j, const ServerOptions& o);
void from_json(const nlohmann::json& j, ServerOptions& o);

/// GET /api/health, POST /api/infer (image/png body or JSON image_base64),
/// OPTIONS preflight, CORS on every response.
class InferenceServer {
 public:
  using InferFn = std::function<InferenceResult(std::span<const std::uint8_t> png)>;

  InferenceServer(std::shared_ptr<const InferenceEngine> engine, ServerOptions options);
  /// Serves an arbitrary predictor; FormatError and InvalidArgument map to 400.
  InferenceServer(std::string checkpoint_id, InferFn infer, ServerOptions options);
  ~InferenceServer();
  InferenceServer(const InferenceServer&) = delete;
  InferenceServer& operator=(const InferenceServer&) = delete;

  /// Binds the socket and serves on a background thread. Returns the port.
  int start();
  /// Binds and serves on the calling thread until stop().
  void run();
  void stop();
  int port() const;
  const ServerOptions& options() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace s3d
