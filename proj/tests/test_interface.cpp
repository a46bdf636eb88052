#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <mutex>

#include <httplib.h>

#include "common/image_io.hpp"
#include "interface/server.hpp"
#include "mesh/obj_io.hpp"
#include "nn/checkpoint.hpp"
#include "pipeline/dataset.hpp"
#include "sketch3d/sketch3d.h"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace s3d;

namespace {

fs::path scratch() {
  static const fs::path dir = [] {
    const fs::path p = fs::temp_directory_path() / ("s3d_test_interface_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

const std::string& checkpoint_path() {
  static const std::string path = [] {
    const std::string p = (scratch() / "toy.ckpt").string();
    Generator<float> g(GeneratorConfig::preset("toy"), 21);
    save_checkpoint<float>(p, g, nullptr, {{"note", "untrained"}});
    return p;
  }();
  return path;
}

// 128x128 ring of dark strokes on white.
GrayImage ring_sketch(int side = 128) {
  GrayImage img{side, side, std::vector<std::uint8_t>(static_cast<std::size_t>(side * side), 255)};
  const double c = (side - 1) / 2.0;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      if (std::abs(std::hypot(x - c, y - c) - side * 0.3) < 2.0) img.pixels[y * side + x] = 0;
  return img;
}

std::string png_string(const GrayImage& img) {
  const auto bytes = encode_png(img);
  return {bytes.begin(), bytes.end()};
}

std::string base64(const std::string& data) {
  static const char* a = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  std::size_t i = 0;
  for (; i + 2 < data.size(); i += 3) {
    const unsigned n = (static_cast<unsigned char>(data[i]) << 16) | (static_cast<unsigned char>(data[i + 1]) << 8) |
                       static_cast<unsigned char>(data[i + 2]);
    out += {a[n >> 18], a[(n >> 12) & 63], a[(n >> 6) & 63], a[n & 63]};
  }
  if (i + 1 == data.size()) {
    const unsigned n = static_cast<unsigned char>(data[i]) << 16;
    out += {a[n >> 18], a[(n >> 12) & 63], '=', '='};
  } else if (i + 2 == data.size()) {
    const unsigned n = (static_cast<unsigned char>(data[i]) << 16) | (static_cast<unsigned char>(data[i + 1]) << 8);
    out += {a[n >> 18], a[(n >> 12) & 63], a[(n >> 6) & 63], '='};
  }
  return out;
}

json without_timing(json j) {
  j.erase("timing_ms");
  return j;
}

// A served toy model with its request log captured in memory.
class ServedModel : public ::testing::Test {
 protected:
  void SetUp() override {
    engine_ = std::make_shared<const InferenceEngine>(load_checkpoint(checkpoint_path()));
    ServerOptions o;
    o.port = 0;
    o.cors_origin = "http://studio.test";
    o.log = [this](const std::string& line) {
      std::lock_guard lock(log_mutex_);
      log_.push_back(line);
    };
    server_ = std::make_unique<InferenceServer>(engine_, o);
    port_ = server_->start();
  }
  void TearDown() override { server_->stop(); }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }

  std::shared_ptr<const InferenceEngine> engine_;
  std::unique_ptr<InferenceServer> server_;
  int port_ = 0;
  std::mutex log_mutex_;
  std::vector<std::string> log_;
};

}  // namespace

// ---- C API

TEST(CApi, VersionAndStatusNames) {
  EXPECT_STREQ(s3d_version(), "1.0.0");
  EXPECT_STREQ(s3d_status_name(S3D_IO_ERROR), "i/o error");
  EXPECT_STREQ(s3d_last_error(), "");
}

TEST(CApi, LoadInferAndExport) {
  s3d_model* model = nullptr;
  ASSERT_EQ(s3d_model_load(checkpoint_path().c_str(), &model), S3D_OK) << s3d_last_error();
  EXPECT_EQ(s3d_model_input_size(model), 64);
  EXPECT_EQ(std::string(s3d_model_checkpoint_id(model)), load_checkpoint(checkpoint_path()).id);

  const auto png = encode_png(ring_sketch());
  s3d_mesh* mesh = nullptr;
  ASSERT_EQ(s3d_infer_png(model, png.data(), png.size(), &mesh), S3D_OK) << s3d_last_error();
  ASSERT_EQ(s3d_mesh_vertex_count(mesh), 642u);
  ASSERT_EQ(s3d_mesh_face_count(mesh), 1280u);
  EXPECT_GT(s3d_mesh_timing_ms(mesh), 0.0);

  // Accessors agree with the core engine.
  const Mesh expected = InferenceEngine(load_checkpoint(checkpoint_path())).infer(ring_sketch()).mesh;
  const double* v = s3d_mesh_vertices(mesh);
  const int32_t* f = s3d_mesh_faces(mesh);
  for (std::size_t i = 0; i < expected.vertices.size(); ++i)
    for (int k = 0; k < 3; ++k) ASSERT_EQ(v[3 * i + k], expected.vertices[i][k]);
  for (std::size_t i = 0; i < expected.faces.size(); ++i)
    for (int k = 0; k < 3; ++k) ASSERT_EQ(f[3 * i + k], expected.faces[i][k]);

  char* obj = nullptr;
  ASSERT_EQ(s3d_mesh_to_obj(mesh, &obj), S3D_OK);
  EXPECT_EQ(std::string(obj), format_obj(expected));
  s3d_string_free(obj);

  char* body = nullptr;
  ASSERT_EQ(s3d_mesh_to_json(mesh, &body), S3D_OK);
  const json j = json::parse(body);
  s3d_string_free(body);
  EXPECT_EQ(j.at("vertices").size(), 642u);
  EXPECT_EQ(j.at("checkpoint_id"), s3d_model_checkpoint_id(model));

  char* info = nullptr;
  ASSERT_EQ(s3d_model_describe(model, &info), S3D_OK);
  EXPECT_EQ(json::parse(info).at("metadata").at("note"), "untrained");
  s3d_string_free(info);

  s3d_mesh_free(mesh);
  s3d_model_free(model);
}

TEST(CApi, ErrorsCarryStatusAndMessage) {
  s3d_model* model = nullptr;
  EXPECT_EQ(s3d_model_load((scratch() / "missing.ckpt").c_str(), &model), S3D_IO_ERROR);
  EXPECT_NE(std::string(s3d_last_error()).find("missing.ckpt"), std::string::npos);
  EXPECT_EQ(model, nullptr);
  EXPECT_EQ(s3d_model_load(nullptr, &model), S3D_INVALID_ARGUMENT);

  const std::string junk = (scratch() / "junk.ckpt").string();
  std::ofstream(junk) << "not a checkpoint";
  EXPECT_EQ(s3d_model_load(junk.c_str(), &model), S3D_FORMAT_ERROR);

  ASSERT_EQ(s3d_model_load(checkpoint_path().c_str(), &model), S3D_OK);
  s3d_mesh* mesh = nullptr;
  const std::uint8_t garbage[] = {1, 2, 3, 4};
  EXPECT_EQ(s3d_infer_png(model, garbage, sizeof garbage, &mesh), S3D_FORMAT_ERROR);
  const auto blank = encode_png(GrayImage{8, 8, std::vector<std::uint8_t>(64, 255)});
  EXPECT_EQ(s3d_infer_png(model, blank.data(), blank.size(), &mesh), S3D_INVALID_ARGUMENT);
  EXPECT_EQ(s3d_infer_file(model, "/nonexistent/sketch.png", &mesh), S3D_IO_ERROR);
  EXPECT_NE(std::string(s3d_last_error()).find("/nonexistent/sketch.png"), std::string::npos);
  EXPECT_EQ(mesh, nullptr);

  char* out = nullptr;
  EXPECT_EQ(s3d_train_resolve_config(R"({"steps": 0})", &out), S3D_INVALID_ARGUMENT);
  EXPECT_EQ(s3d_train_resolve_config("[1,2]", &out), S3D_INVALID_ARGUMENT);
  EXPECT_EQ(s3d_train_resolve_config("{", &out), S3D_INVALID_ARGUMENT);
  EXPECT_EQ(out, nullptr);
  s3d_model_free(model);
}

TEST(CApi, ResolvedTrainConfigKeepsDefaults) {
  char* out = nullptr;
  ASSERT_EQ(s3d_train_resolve_config(nullptr, &out), S3D_OK);
  const json d = json::parse(out);
  s3d_string_free(out);
  EXPECT_EQ(d.at("steps"), 2000);
  EXPECT_EQ(d.at("learning_rate"), 1e-4);
  EXPECT_EQ(d.at("batch_size"), 8);
  EXPECT_EQ(d.at("use_sd"), true);
  EXPECT_EQ(d.at("weights").at("lambda_sd"), 0.1);
  ASSERT_EQ(s3d_train_resolve_config(R"({"preset":"toy","use_sem":false})", &out), S3D_OK);
  const json t = json::parse(out);
  s3d_string_free(out);
  EXPECT_EQ(t.at("use_sem"), false);
  EXPECT_EQ(t.at("model_preset"), "toy");
}

TEST(CApi, DatasetGenerationIsHashStable) {
  const std::string opts = R"({"categories":2,"per_category":3,"resolution":32,"seed":4})";
  char* a = nullptr;
  char* b = nullptr;
  ASSERT_EQ(s3d_dataset_generate((scratch() / "ds_a").c_str(), opts.c_str(), &a), S3D_OK) << s3d_last_error();
  ASSERT_EQ(s3d_dataset_generate((scratch() / "ds_b").c_str(), opts.c_str(), &b), S3D_OK);
  EXPECT_EQ(json::parse(a).at("hashes"), json::parse(b).at("hashes"));
  EXPECT_EQ(json::parse(a).at("entries"), 6);
  s3d_string_free(a);
  s3d_string_free(b);
  char* v = nullptr;
  ASSERT_EQ(s3d_dataset_verify((scratch() / "ds_a").c_str(), &v), S3D_OK);
  EXPECT_EQ(json::parse(v).at("ok"), true);
  s3d_string_free(v);
}

// ---- HTTP service

TEST_F(ServedModel, Health) {
  auto c = client();
  const auto res = c.Get("/api/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body), (json{{"status", "ok"}, {"checkpoint", engine_->checkpoint_id()}}));
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://studio.test");
}

TEST_F(ServedModel, InferPngReturnsTemplateTopology) {
  auto c = client();
  const auto res = c.Post("/api/infer", png_string(ring_sketch()), "image/png");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200) << res->body;
  EXPECT_EQ(res->get_header_value("Content-Type"), "application/json");
  const json j = json::parse(res->body);
  EXPECT_EQ(j.at("vertices").size(), 642u);
  EXPECT_EQ(j.at("faces").size(), 1280u);
  EXPECT_EQ(j.at("checkpoint_id"), engine_->checkpoint_id());
  EXPECT_GT(j.at("timing_ms").get<double>(), 0.0);
  for (const auto& f : j.at("faces"))
    for (const auto& idx : f) EXPECT_LT(idx.get<int>(), 642);
  const Mesh direct = engine_->infer(ring_sketch()).mesh;
  for (std::size_t i = 0; i < direct.vertices.size(); ++i)
    for (int k = 0; k < 3; ++k) ASSERT_EQ(j["vertices"][i][k].get<double>(), direct.vertices[i][k]);
}

TEST_F(ServedModel, Base64AndPngBodiesAgree) {
  auto c = client();
  const std::string png = png_string(ring_sketch());
  const auto a = c.Post("/api/infer", png, "image/png");
  const auto b = c.Post("/api/infer", json{{"image_base64", base64(png)}}.dump(), "application/json");
  const auto d = c.Post("/api/infer", json{{"image_base64", "data:image/png;base64," + base64(png)}}.dump(),
                        "application/json");
  ASSERT_TRUE(a && b && d);
  ASSERT_EQ(b->status, 200) << b->body;
  ASSERT_EQ(d->status, 200) << d->body;
  EXPECT_EQ(without_timing(json::parse(a->body)), without_timing(json::parse(b->body)));
  EXPECT_EQ(without_timing(json::parse(a->body)), without_timing(json::parse(d->body)));
}

TEST_F(ServedModel, RepeatedRequestsAreByteIdenticalModuloTiming) {
  auto c = client();
  const std::string png = png_string(ring_sketch());
  const auto a = c.Post("/api/infer", png, "image/png");
  const auto b = c.Post("/api/infer", png, "image/png");
  ASSERT_TRUE(a && b);
  EXPECT_EQ(without_timing(json::parse(a->body)).dump(), without_timing(json::parse(b->body)).dump());
}

TEST_F(ServedModel, ObjOnRequest) {
  auto c = client();
  const auto res = c.Post("/api/infer", {{"Accept", "model/obj"}}, png_string(ring_sketch()), "image/png");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "model/obj");
  EXPECT_EQ(res->body, format_obj(engine_->infer(ring_sketch()).mesh));
  const Mesh parsed = parse_obj(res->body);
  EXPECT_EQ(parsed.vertices.size(), 642u);
}

TEST_F(ServedModel, CorsPreflight) {
  auto c = client();
  const auto res = c.Options("/api/infer", {{"Origin", "http://studio.test"},
                                            {"Access-Control-Request-Method", "POST"},
                                            {"Access-Control-Request-Headers", "Content-Type"}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://studio.test");
  EXPECT_NE(res->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
  EXPECT_NE(res->get_header_value("Access-Control-Allow-Headers").find("Content-Type"), std::string::npos);
}

TEST_F(ServedModel, MalformedInputsAre400WithReason) {
  auto c = client();
  const GrayImage blank{16, 16, std::vector<std::uint8_t>(256, 255)};
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"not a png", "image/png"},
      {"", "image/png"},
      {png_string(blank), "image/png"},
      {"{", "application/json"},
      {R"({"image": "abc"})", "application/json"},
      {R"({"image_base64": "@@@@"})", "application/json"},
      {json{{"image_base64", base64("not a png")}}.dump(), "application/json"},
  };
  for (const auto& [body, type] : cases) {
    const auto res = c.Post("/api/infer", body, type);
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 400) << type << " " << body.substr(0, 20);
    EXPECT_FALSE(json::parse(res->body).at("error").get<std::string>().empty());
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://studio.test");
  }
  const auto wrong = c.Post("/api/infer", "hello", "text/plain");
  ASSERT_TRUE(wrong);
  EXPECT_EQ(wrong->status, 415);
  const auto missing = c.Get("/api/nothing");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
  EXPECT_TRUE(json::parse(missing->body).contains("error"));
}

TEST_F(ServedModel, OversizedBodyIs413) {
  auto c = client();
  const std::string big((4u << 20) + 1, 'x');
  const auto res = c.Post("/api/infer", big, "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 413);
  EXPECT_TRUE(json::parse(res->body).contains("error"));
  // Exactly at the limit is accepted by the transport (and rejected as an image).
  const auto at = c.Post("/api/infer", std::string(4u << 20, 'x'), "image/png");
  ASSERT_TRUE(at);
  EXPECT_EQ(at->status, 400);
}

TEST_F(ServedModel, ConcurrentIdenticalRequests) {
  const std::string png = png_string(ring_sketch());
  std::vector<std::future<std::string>> futures;
  for (int i = 0; i < 8; ++i) {
    futures.push_back(std::async(std::launch::async, [&] {
      auto c = client();
      const auto res = c.Post("/api/infer", png, "image/png");
      if (!res || res->status != 200) return std::string("failed");
      return without_timing(json::parse(res->body)).dump();
    }));
  }
  std::vector<std::string> bodies;
  for (auto& f : futures) bodies.push_back(f.get());
  for (const auto& b : bodies) {
    EXPECT_NE(b, "failed");
    EXPECT_EQ(b, bodies.front());
  }
}

TEST_F(ServedModel, RequestLogIsJsonPerRequest) {
  {
    auto c = client();
    c.Get("/api/health");
    c.Post("/api/infer", "bad", "image/png");
  }
  server_->stop();
  std::lock_guard lock(log_mutex_);
  ASSERT_GE(log_.size(), 2u);
  const json first = json::parse(log_[0]);
  EXPECT_EQ(first.at("path"), "/api/health");
  EXPECT_EQ(first.at("status"), 200);
  EXPECT_GE(first.at("ms").get<double>(), 0.0);
  const json second = json::parse(log_[1]);
  EXPECT_EQ(second.at("status"), 400);
}

TEST(Server, InternalFailureIs500WithOpaqueId) {
  std::vector<std::string> log;
  std::mutex m;
  ServerOptions o;
  o.port = 0;
  o.log = [&](const std::string& line) {
    std::lock_guard lock(m);
    log.push_back(line);
  };
  InferenceServer server(
      "broken", [](std::span<const std::uint8_t>) -> InferenceResult { throw std::runtime_error("secret detail"); }, o);
  const int port = server.start();
  httplib::Client c("127.0.0.1", port);
  const auto res = c.Post("/api/infer", png_string(ring_sketch()), "image/png");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 500);
  const json body = json::parse(res->body);
  EXPECT_EQ(body.at("error"), "internal error");
  const std::string id = body.at("id");
  EXPECT_EQ(id.size(), 16u);
  EXPECT_EQ(res->body.find("secret"), std::string::npos);
  server.stop();
  bool logged = false;
  for (const auto& line : log) {
    const json j = json::parse(line);
    if (j.value("id", "") == id) logged = j.at("detail") == "secret detail";
  }
  EXPECT_TRUE(logged);
}

TEST(Server, PortEnvironmentOverride) {
  ServerOptions o;
  o.port = 1234;
  ::setenv(kPortEnvVar, "4321", 1);
  o.apply_environment();
  EXPECT_EQ(o.port, 4321);
  ::setenv(kPortEnvVar, "http", 1);
  EXPECT_THROW(o.apply_environment(), InvalidArgument);
  ::unsetenv(kPortEnvVar);
  o.apply_environment();
  EXPECT_EQ(o.port, 4321);
}

TEST(Server, CApiServerServesAndLogsToFile) {
  s3d_model* model = nullptr;
  ASSERT_EQ(s3d_model_load(checkpoint_path().c_str(), &model), S3D_OK);
  const std::string log_path = (scratch() / "requests.ndjson").string();
  s3d_server* server = nullptr;
  const std::string opts = json{{"port", 0}, {"log_path", log_path}}.dump();
  ASSERT_EQ(s3d_server_create(model, opts.c_str(), &server), S3D_OK) << s3d_last_error();
  int port = 0;
  ASSERT_EQ(s3d_server_start(server, &port), S3D_OK) << s3d_last_error();
  EXPECT_EQ(s3d_server_port(server), port);
  httplib::Client c("127.0.0.1", port);
  const auto res = c.Get("/api/health");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body).at("checkpoint"), s3d_model_checkpoint_id(model));
  s3d_server_stop(server);
  s3d_server_free(server);
  s3d_model_free(model);
  std::ifstream in(log_path);
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_EQ(json::parse(line).at("path"), "/api/health");
}

// ---- CLI

namespace {

int run_cli(const std::string& args, std::string* output = nullptr) {
  const std::string out = (scratch() / "cli_output.txt").string();
  const int rc = std::system((std::string(SKETCH3D_CLI) + " " + args + " >" + out + " 2>&1").c_str());
  if (output) {
    std::ifstream in(out);
    *output = {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  std::string out;
  EXPECT_EQ(run_cli("--help", &out), 0);
  for (const char* sub : {"gen-data", "train", "eval", "infer", "serve", "bench", "gradcheck"}) {
    EXPECT_NE(out.find(sub), std::string::npos) << sub;
  }
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("infer --ckpt a --sketch b --out c --unknown-flag"), 1);
  EXPECT_EQ(run_cli("infer --ckpt a --sketch b"), 1);
  EXPECT_EQ(run_cli("train --data d --out o --steps 0"), 1);
  const std::string missing = (scratch() / "no_such_sketch.png").string();
  EXPECT_EQ(run_cli("infer --ckpt " + checkpoint_path() + " --sketch " + missing + " --out x.obj", &out), 2);
  EXPECT_NE(out.find(missing), std::string::npos) << out;
}

TEST(Cli, HelpDocumentsEveryFlag) {
  std::string out;
  ASSERT_EQ(run_cli("train --help", &out), 0);
  for (const char* flag : {"--data", "--out", "--preset", "--config", "--steps", "--lr", "--batch", "--views",
                           "--lambda-sd", "--seed", "--categories", "--no-sd", "--no-sem", "--verification"}) {
    EXPECT_NE(out.find(flag), std::string::npos) << flag;
  }
}

TEST(Cli, GenDataPrintsConfigAndWritesEntries) {
  std::string out;
  const auto dir = scratch() / "cli_ds";
  ASSERT_EQ(run_cli("gen-data --out " + dir.string() + " --categories 3 --per-category 10 --seed 7 --resolution 32",
                    &out),
            0)
      << out;
  EXPECT_NE(out.find("config gen-data"), std::string::npos);
  EXPECT_EQ(load_manifest(dir).entries.size(), 30u);
}

TEST_F(ServedModel, CliAndHttpMeshesAreIdentical) {
  const auto sketch = scratch() / "ring.png";
  write_png(sketch.string(), ring_sketch());
  const auto out_json = scratch() / "cli_mesh.json";
  const auto out_obj = scratch() / "cli_mesh.obj";
  std::string log;
  ASSERT_EQ(run_cli("infer --ckpt " + checkpoint_path() + " --sketch " + sketch.string() + " --out " +
                        out_json.string(), &log), 0) << log;
  ASSERT_EQ(run_cli("infer --ckpt " + checkpoint_path() + " --sketch " + sketch.string() + " --out " +
                        out_obj.string()), 0);
  std::ifstream in(out_json);
  const json cli = json::parse(in);

  auto c = client();
  const auto res = c.Post("/api/infer", png_string(ring_sketch()), "image/png");
  ASSERT_TRUE(res && res->status == 200);
  const json http = json::parse(res->body);
  EXPECT_EQ(cli.at("vertices"), http.at("vertices"));
  EXPECT_EQ(cli.at("faces"), http.at("faces"));
  EXPECT_EQ(cli.at("checkpoint_id"), http.at("checkpoint_id"));

  const Mesh from_obj = load_obj(out_obj);
  for (std::size_t i = 0; i < from_obj.vertices.size(); ++i)
    for (int k = 0; k < 3; ++k) ASSERT_EQ(from_obj.vertices[i][k], http["vertices"][i][k].get<double>());
}
