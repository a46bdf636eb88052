#include "sketch3d/sketch3d.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "diagnostics/gradient_suite.hpp"
#include "interface/server.hpp"
#include "mesh/obj_io.hpp"
#include "pipeline/evaluate.hpp"
#include "pipeline/train.hpp"

using nlohmann::json;

struct s3d_model {
  std::shared_ptr<const s3d::InferenceEngine> engine;
};

struct s3d_mesh {
  s3d::Mesh mesh;
  std::vector<double> vertices;
  std::vector<std::int32_t> faces;
  double timing_ms = 0.0;
  std::string checkpoint_id;
};

struct s3d_server {
  std::unique_ptr<s3d::InferenceServer> server;
  std::shared_ptr<std::ofstream> log_file;
};

namespace {

thread_local std::string t_last_error;

s3d_status fail(s3d_status status, const std::string& message) {
  t_last_error = message;
  return status;
}

// Runs `fn`, mapping exceptions to status codes and the thread's last error.
template <typename Fn>
s3d_status guarded(Fn&& fn) {
  t_last_error.clear();
  try {
    fn();
    return S3D_OK;
  } catch (const s3d::TrainingDiverged& e) {
    return fail(S3D_TRAINING_DIVERGED, e.what());
  } catch (const s3d::InvalidArgument& e) {
    return fail(S3D_INVALID_ARGUMENT, e.what());
  } catch (const s3d::IoError& e) {
    return fail(S3D_IO_ERROR, e.what());
  } catch (const s3d::FormatError& e) {
    return fail(S3D_FORMAT_ERROR, e.what());
  } catch (const json::exception& e) {
    return fail(S3D_INVALID_ARGUMENT, std::string("json: ") + e.what());
  } catch (const std::exception& e) {
    return fail(S3D_INTERNAL_ERROR, e.what());
  } catch (...) {
    return fail(S3D_INTERNAL_ERROR, "unknown exception");
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw s3d::InvalidArgument(what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void emit(char** out, const json& j) {
  if (out) *out = dup_string(j.dump(2));
}

json parse_options(const char* text) {
  if (!text || !*text) return json::object();
  json j = json::parse(text);
  if (!j.is_object()) throw s3d::InvalidArgument("options must be a JSON object");
  return j;
}

s3d_mesh* make_mesh(const s3d::InferenceResult& r, const std::string& checkpoint_id) {
  auto m = std::make_unique<s3d_mesh>();
  m->mesh = r.mesh;
  for (const auto& v : r.mesh.vertices) m->vertices.insert(m->vertices.end(), v.begin(), v.end());
  for (const auto& f : r.mesh.faces) m->faces.insert(m->faces.end(), f.begin(), f.end());
  m->timing_ms = r.timing_ms;
  m->checkpoint_id = checkpoint_id;
  return m.release();
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw s3d::IoError("cannot read '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

s3d::DatasetOptions dataset_options(const json& j) {
  s3d::DatasetOptions o;
  o.categories = s3d::default_categories(3);
  if (j.contains("categories")) {
    const auto& c = j.at("categories");
    o.categories = c.is_number_integer() ? s3d::default_categories(c.get<int>()) : c.get<std::vector<std::string>>();
  }
  o.per_category = j.value("per_category", o.per_category);
  o.resolution = j.value("resolution", o.resolution);
  o.seed = j.value("seed", o.seed);
  o.test_fraction = j.value("test_fraction", o.test_fraction);
  return o;
}

json dataset_options_json(const s3d::DatasetOptions& o) {
  return {{"categories", o.categories},
          {"per_category", o.per_category},
          {"resolution", o.resolution},
          {"seed", o.seed},
          {"test_fraction", o.test_fraction}};
}

s3d::EvalOptions eval_options(const json& j) {
  s3d::EvalOptions o;
  o.voxel_resolution = j.value("voxel_resolution", o.voxel_resolution);
  o.chamfer_samples = j.value("chamfer_samples", o.chamfer_samples);
  o.seed = j.value("seed", o.seed);
  o.split = j.value("split", o.split);
  o.categories = j.value("categories", o.categories);
  return o;
}

}  // namespace

extern "C" {

const char* s3d_version(void) { return "1.0.0"; }

const char* s3d_status_name(s3d_status status) {
  switch (status) {
    case S3D_OK: return "ok";
    case S3D_INVALID_ARGUMENT: return "invalid argument";
    case S3D_IO_ERROR: return "i/o error";
    case S3D_FORMAT_ERROR: return "format error";
    case S3D_TRAINING_DIVERGED: return "training diverged";
    case S3D_INTERNAL_ERROR: return "internal error";
  }
  return "unknown status";
}

const char* s3d_last_error(void) { return t_last_error.c_str(); }

void s3d_string_free(char* s) { std::free(s); }

s3d_status s3d_model_load(const char* checkpoint_path, s3d_model** out) {
  return guarded([&] {
    require(checkpoint_path && out, "s3d_model_load: null argument");
    *out = nullptr;
    auto engine = std::make_shared<const s3d::InferenceEngine>(s3d::load_checkpoint(checkpoint_path));
    *out = new s3d_model{std::move(engine)};
  });
}

void s3d_model_free(s3d_model* model) { delete model; }

const char* s3d_model_checkpoint_id(const s3d_model* model) {
  return model ? model->engine->checkpoint_id().c_str() : "";
}

int s3d_model_input_size(const s3d_model* model) { return model ? model->engine->input_size() : 0; }

s3d_status s3d_model_describe(const s3d_model* model, char** json_out) {
  return guarded([&] {
    require(model && json_out, "s3d_model_describe: null argument");
    const auto& ck = model->engine->checkpoint();
    json j = {{"checkpoint_id", ck.id},
              {"generator_config", ck.generator->config()},
              {"parameters", ck.generator->params().total_size()},
              {"metadata", ck.metadata}};
    if (ck.discriminator) j["discriminator_config"] = ck.discriminator->config();
    emit(json_out, j);
  });
}

s3d_status s3d_infer_png(const s3d_model* model, const uint8_t* png, size_t png_size, s3d_mesh** out) {
  return guarded([&] {
    require(model && png && out, "s3d_infer_png: null argument");
    *out = nullptr;
    const auto r = model->engine->infer_png({png, png_size});
    *out = make_mesh(r, model->engine->checkpoint_id());
  });
}

s3d_status s3d_infer_file(const s3d_model* model, const char* png_path, s3d_mesh** out) {
  return guarded([&] {
    require(model && png_path && out, "s3d_infer_file: null argument");
    *out = nullptr;
    const auto bytes = read_file(png_path);
    s3d::InferenceResult r;
    try {
      r = model->engine->infer_png(bytes);
    } catch (const s3d::FormatError& e) {
      throw s3d::FormatError(std::string(png_path) + ": " + e.what());
    }
    *out = make_mesh(r, model->engine->checkpoint_id());
  });
}

size_t s3d_mesh_vertex_count(const s3d_mesh* mesh) { return mesh ? mesh->mesh.vertices.size() : 0; }
size_t s3d_mesh_face_count(const s3d_mesh* mesh) { return mesh ? mesh->mesh.faces.size() : 0; }
const double* s3d_mesh_vertices(const s3d_mesh* mesh) { return mesh ? mesh->vertices.data() : nullptr; }
const int32_t* s3d_mesh_faces(const s3d_mesh* mesh) { return mesh ? mesh->faces.data() : nullptr; }
double s3d_mesh_timing_ms(const s3d_mesh* mesh) { return mesh ? mesh->timing_ms : 0.0; }

s3d_status s3d_mesh_to_obj(const s3d_mesh* mesh, char** obj_out) {
  return guarded([&] {
    require(mesh && obj_out, "s3d_mesh_to_obj: null argument");
    *obj_out = dup_string(s3d::format_obj(mesh->mesh));
  });
}

s3d_status s3d_mesh_to_json(const s3d_mesh* mesh, char** json_out) {
  return guarded([&] {
    require(mesh && json_out, "s3d_mesh_to_json: null argument");
    *json_out = dup_string(s3d::infer_response_json(mesh->mesh, mesh->timing_ms, mesh->checkpoint_id).dump());
  });
}

s3d_status s3d_mesh_save_obj(const s3d_mesh* mesh, const char* path) {
  return guarded([&] {
    require(mesh && path, "s3d_mesh_save_obj: null argument");
    s3d::save_obj(mesh->mesh, path);
  });
}

void s3d_mesh_free(s3d_mesh* mesh) { delete mesh; }

s3d_status s3d_dataset_generate(const char* out_dir, const char* options_json, char** report_json) {
  return guarded([&] {
    require(out_dir, "s3d_dataset_generate: null output directory");
    const auto options = dataset_options(parse_options(options_json));
    const auto m = s3d::generate_synthetic_dataset(out_dir, options);
    emit(report_json, {{"root", m.root.string()},
                       {"options", dataset_options_json(options)},
                       {"entries", m.entries.size()},
                       {"train", m.train.size()},
                       {"test", m.test.size()},
                       {"hashes", s3d::dataset_hashes(m)}});
  });
}

s3d_status s3d_dataset_verify(const char* data_dir, char** report_json) {
  return guarded([&] {
    require(data_dir, "s3d_dataset_verify: null directory");
    const auto m = s3d::load_manifest(data_dir);
    const auto bad = s3d::verify_dataset_hashes(m);
    emit(report_json, {{"root", m.root.string()}, {"entries", m.entries.size()}, {"mismatched", bad}, {"ok", bad.empty()}});
  });
}

s3d_status s3d_train_resolve_config(const char* config_json, char** resolved_json) {
  return guarded([&] {
    const auto cfg = parse_options(config_json).get<s3d::TrainConfig>();
    cfg.validate();
    emit(resolved_json, cfg);
  });
}

s3d_status s3d_train(const char* data_dir, const char* out_dir, const char* config_json, s3d_progress_fn progress,
                     void* user, char** report_json) {
  return guarded([&] {
    require(data_dir && out_dir, "s3d_train: null directory");
    const auto cfg = parse_options(config_json).get<s3d::TrainConfig>();
    const auto data = s3d::load_manifest(data_dir);
    s3d::TrainProgress cb;
    if (progress) cb = [&](const s3d::LossReport& r) { progress(r.to_ndjson().c_str(), user); };
    const auto r = s3d::train(cfg, data, out_dir, cb);
    json snaps = json::array();
    for (const auto& s : r.snapshots) {
      snaps.push_back({{"step", s.step}, {"path", s.path}, {"l_sp", s.l_sp}, {"best_l_sp", s.best_l_sp}});
    }
    emit(report_json, {{"checkpoint", r.checkpoint_path},
                       {"checkpoint_id", r.checkpoint_id},
                       {"log", r.log_path},
                       {"steps", r.history.size()},
                       {"final", r.history.back()},
                       {"snapshots", snaps},
                       {"discriminator_calls", r.discriminator_calls},
                       {"seconds", r.seconds},
                       {"config", cfg}});
  });
}

s3d_status s3d_evaluate(const char* checkpoint_path, const char* data_dir, const char* options_json,
                        char** report_json) {
  return guarded([&] {
    require(checkpoint_path && data_dir, "s3d_evaluate: null argument");
    const auto options = eval_options(parse_options(options_json));
    const s3d::InferenceEngine engine(s3d::load_checkpoint(checkpoint_path));
    const auto table = s3d::evaluate(engine, s3d::load_manifest(data_dir), options);
    json j = table;
    j["config"]["split"] = options.split;
    j["config"]["categories"] = options.categories;
    j["text"] = table.to_text();
    emit(report_json, j);
  });
}

s3d_status s3d_benchmark(const char* checkpoint_path, const char* png_path, const char* options_json,
                         char** report_json) {
  return guarded([&] {
    require(checkpoint_path && png_path, "s3d_benchmark: null argument");
    const json o = parse_options(options_json);
    const s3d::InferenceEngine engine(s3d::load_checkpoint(checkpoint_path));
    const auto r = s3d::benchmark_runtime(engine, read_file(png_path), o.value("iters", 50), o.value("threads", 1),
                                          o.value("warmup", 3));
    json j = r;
    j["text"] = s3d::benchmark_text(r);
    emit(report_json, j);
  });
}

s3d_status s3d_gradcheck(const char* options_json, int* passed, char** report_json) {
  return guarded([&] {
    const json o = parse_options(options_json);
    s3d::GradientSuiteOptions opt;
    opt.eps = o.value("eps", opt.eps);
    opt.tolerance = o.value("tolerance", opt.tolerance);
    opt.raster_tolerance = o.value("raster_tolerance", opt.raster_tolerance);
    opt.seed = o.value("seed", opt.seed);
    const auto r = s3d::run_gradient_suite(opt);
    if (passed) *passed = r.passed ? 1 : 0;
    json j = r;
    j["text"] = r.to_text();
    emit(report_json, j);
  });
}

s3d_status s3d_server_create(const s3d_model* model, const char* options_json, s3d_server** out) {
  return guarded([&] {
    require(model && out, "s3d_server_create: null argument");
    *out = nullptr;
    const json j = parse_options(options_json);
    auto options = j.get<s3d::ServerOptions>();
    options.apply_environment();
    auto server = std::make_unique<s3d_server>();
    if (j.contains("log_path")) {
      const auto path = j.at("log_path").get<std::string>();
      server->log_file = std::make_shared<std::ofstream>(path, std::ios::app);
      if (!*server->log_file) throw s3d::IoError("cannot open request log '" + path + "'");
      auto file = server->log_file;
      options.log = [file](const std::string& line) { *file << line << '\n' << std::flush; };
    }
    server->server = std::make_unique<s3d::InferenceServer>(model->engine, std::move(options));
    *out = server.release();
  });
}

s3d_status s3d_server_start(s3d_server* server, int* port) {
  return guarded([&] {
    require(server, "s3d_server_start: null server");
    const int p = server->server->start();
    if (port) *port = p;
  });
}

s3d_status s3d_server_run(s3d_server* server) {
  return guarded([&] {
    require(server, "s3d_server_run: null server");
    server->server->run();
  });
}

void s3d_server_stop(s3d_server* server) {
  if (server) server->server->stop();
}

int s3d_server_port(const s3d_server* server) { return server ? server->server->port() : -1; }

void s3d_server_free(s3d_server* server) { delete server; }

}  // extern "C"
