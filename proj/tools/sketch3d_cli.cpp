#include <algorithm>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sketch3d/sketch3d.h"

using nlohmann::json;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

struct RuntimeFailure {
  std::string message;
  int exit_code = kRuntimeError;
};

// Owns a string returned by the library.
struct LibString {
  char* p = nullptr;
  ~LibString() { s3d_string_free(p); }
  json parse() const { return json::parse(p); }
};

void check(s3d_status status, const std::string& what, int exit_code = kRuntimeError) {
  if (status != S3D_OK) {
    throw RuntimeFailure{what + ": " + s3d_status_name(status) + ": " + s3d_last_error(), exit_code};
  }
}

void print_config(const std::string& command, const json& config) {
  std::cout << "config " << command << " " << config.dump() << std::endl;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw RuntimeFailure{"cannot write '" + path + "'"};
}

std::string ends_with_json(const std::string& path) {
  return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0 ? "json" : "obj";
}

struct Model {
  s3d_model* p = nullptr;
  explicit Model(const std::string& path) { check(s3d_model_load(path.c_str(), &p), "loading checkpoint '" + path + "'"); }
  ~Model() { s3d_model_free(p); }
};

// ---- subcommands

struct GenData {
  std::string out, categories = "3";
  int per_category = 10, resolution = 128;
  std::uint64_t seed = 0;
  double test_fraction = 0.2;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("gen-data", "Generate the synthetic sketch/mesh dataset");
    c->add_option("--out", out, "Output directory")->required();
    c->add_option("--categories", categories, "Number of shape families, or a comma-separated list of names")
        ->capture_default_str();
    c->add_option("--per-category", per_category, "Shapes per category")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--resolution", resolution, "Sketch side in pixels")->capture_default_str();
    c->add_option("--seed", seed, "Random seed")->capture_default_str();
    c->add_option("--test-fraction", test_fraction, "Fraction of each category held out")->capture_default_str();
    c->callback([this] { run(); });
  }

  void run() {
    json o = {{"per_category", per_category}, {"resolution", resolution}, {"seed", seed}, {"test_fraction", test_fraction}};
    if (!categories.empty() && std::all_of(categories.begin(), categories.end(), ::isdigit)) {
      o["categories"] = std::stoi(categories);
    } else {
      std::vector<std::string> names;
      std::stringstream ss(categories);
      for (std::string n; std::getline(ss, n, ',');) {
        if (!n.empty()) names.push_back(n);
      }
      o["categories"] = names;
    }
    LibString report;
    check(s3d_dataset_generate(out.c_str(), o.dump().c_str(), &report.p), "gen-data");
    json r = report.parse();
    print_config("gen-data", r["options"]);
    std::cout << "wrote " << r["entries"] << " entries (" << r["train"] << " train, " << r["test"] << " test) to "
              << r["root"].get<std::string>() << std::endl;
  }
};

struct Train {
  std::string data, out, preset = "default", config_file;
  std::optional<int> steps, batch, views, log_every;
  std::optional<double> lr, lambda_sd;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> categories;
  bool no_sd = false, no_sem = false, verification = false, quiet = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Train a generator");
    c->add_option("--data", data, "Dataset directory")->required();
    c->add_option("--out", out, "Output directory for the checkpoint, snapshots and log")->required();
    c->add_option("--preset", preset, "Base configuration")->check(CLI::IsMember({"default", "toy"}))->capture_default_str();
    c->add_option("--config", config_file, "JSON file with TrainConfig overrides (applied before flags)")->check(CLI::ExistingFile);
    c->add_option("--steps", steps, "Optimisation steps");
    c->add_option("--lr", lr, "Generator learning rate");
    c->add_option("--batch", batch, "Batch size");
    c->add_option("--views", views, "Views per sample for the discriminator");
    c->add_option("--lambda-sd", lambda_sd, "Weight of the adversarial term");
    c->add_option("--seed", seed, "Random seed");
    c->add_option("--categories", categories, "Train only on these categories")->delimiter(',');
    c->add_flag("--no-sd", no_sd, "Disable the structure-aware discriminator");
    c->add_flag("--no-sem", no_sem, "Disable the stroke enhancement module");
    c->add_flag("--verification", verification, "Train in float64");
    c->add_option("--log-every", log_every, "Print a loss line every N steps (default: steps/20)");
    c->add_flag("--quiet", quiet, "Do not print per-step losses");
    c->callback([this] { run(); });
  }

  void run() {
    json cfg = json::object();
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      try {
        cfg = json::parse(in);
      } catch (const json::exception& e) {
        throw RuntimeFailure{"--config '" + config_file + "': " + e.what(), kUsageError};
      }
    }
    cfg["preset"] = cfg.value("preset", preset);
    if (steps) cfg["steps"] = *steps;
    if (lr) cfg["learning_rate"] = *lr;
    if (batch) cfg["batch_size"] = *batch;
    if (views) cfg["n_views"] = *views;
    if (seed) cfg["seed"] = *seed;
    if (lambda_sd) cfg["weights"]["lambda_sd"] = *lambda_sd;
    if (!categories.empty()) cfg["categories"] = categories;
    if (no_sd) cfg["use_sd"] = false;
    if (no_sem) cfg["use_sem"] = false;
    if (verification) cfg["verification"] = true;

    LibString resolved;
    check(s3d_train_resolve_config(cfg.dump().c_str(), &resolved.p), "train config", kUsageError);
    const json full = resolved.parse();
    print_config("train", full);

    const int total = full["steps"].get<int>();
    every_ = quiet ? 0 : log_every.value_or(std::max(1, total / 20));
    total_ = total;
    LibString report;
    check(s3d_train(data.c_str(), out.c_str(), full.dump().c_str(), &Train::progress, this, &report.p), "train");
    const json r = report.parse();
    std::cout << "checkpoint " << r["checkpoint"].get<std::string>() << " id " << r["checkpoint_id"].get<std::string>()
              << " after " << r["steps"] << " steps in " << r["seconds"].get<double>() << " s, discriminator calls "
              << r["discriminator_calls"] << std::endl;
  }

  static void progress(const char* line, void* user) {
    auto* self = static_cast<Train*>(user);
    if (self->every_ <= 0) return;
    const json r = json::parse(line);
    const int step = r["step"].get<int>();
    if (step % self->every_ != 0 && step + 1 != self->total_) return;
    std::printf("step %6d  total %.5f  l_sp %.5f  l_r %.6f  l_sd %.4f/%.4f  lr %.2e  %.1fs\n", step,
                r["total"].get<double>(), r["l_sp"].get<double>(), r["l_r"].get<double>(),
                r["l_sd_generator"].get<double>(), r["l_sd_discriminator"].get<double>(),
                r["learning_rate"].get<double>(), r["wall_seconds"].get<double>());
    std::fflush(stdout);
  }

  int every_ = 0, total_ = 0;
};

struct Eval {
  std::string ckpt, data, split = "test", json_out;
  int voxel_resolution = 32;
  std::size_t chamfer_samples = 2048;
  std::uint64_t seed = 0;
  std::vector<std::string> categories;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "Score a checkpoint on a dataset split");
    c->add_option("--ckpt", ckpt, "Checkpoint file")->required();
    c->add_option("--data", data, "Dataset directory")->required();
    c->add_option("--split", split, "train, test or all")->check(CLI::IsMember({"train", "test", "all"}))->capture_default_str();
    c->add_option("--voxel-resolution", voxel_resolution, "Voxel grid side for IoU")->capture_default_str();
    c->add_option("--chamfer-samples", chamfer_samples, "Surface samples per mesh for Chamfer distance")->capture_default_str();
    c->add_option("--seed", seed, "Sampling seed")->capture_default_str();
    c->add_option("--categories", categories, "Restrict to these categories")->delimiter(',');
    c->add_option("--json", json_out, "Also write the metrics table as JSON");
    c->callback([this] { run(); });
  }

  void run() {
    const json o = {{"split", split},
                    {"voxel_resolution", voxel_resolution},
                    {"chamfer_samples", chamfer_samples},
                    {"seed", seed},
                    {"categories", categories}};
    print_config("eval", {{"ckpt", ckpt}, {"data", data}, {"options", o}});
    LibString report;
    check(s3d_evaluate(ckpt.c_str(), data.c_str(), o.dump().c_str(), &report.p), "eval");
    json r = report.parse();
    std::cout << r["text"].get<std::string>();
    if (!json_out.empty()) {
      r.erase("text");
      write_text(json_out, r.dump(2) + "\n");
    }
  }
};

struct Infer {
  std::string ckpt, sketch, out, format;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("infer", "Generate a mesh from one sketch PNG");
    c->add_option("--ckpt", ckpt, "Checkpoint file")->required();
    c->add_option("--sketch", sketch, "Sketch PNG (dark strokes on light, or the inverse)")->required();
    c->add_option("--out", out, "Output mesh (.obj, or .json for the HTTP response body)")->required();
    c->add_option("--format", format, "Override the output format")->check(CLI::IsMember({"obj", "json"}));
    c->callback([this] { run(); });
  }

  void run() {
    const std::string fmt = format.empty() ? ends_with_json(out) : format;
    print_config("infer", {{"ckpt", ckpt}, {"sketch", sketch}, {"out", out}, {"format", fmt}});
    Model model(ckpt);
    s3d_mesh* mesh = nullptr;
    check(s3d_infer_file(model.p, sketch.c_str(), &mesh), "infer");
    struct Free {
      s3d_mesh* m;
      ~Free() { s3d_mesh_free(m); }
    } guard{mesh};
    if (fmt == "json") {
      LibString body;
      check(s3d_mesh_to_json(mesh, &body.p), "infer");
      write_text(out, body.p);
    } else {
      check(s3d_mesh_save_obj(mesh, out.c_str()), "infer");
    }
    std::cout << "wrote " << s3d_mesh_vertex_count(mesh) << " vertices, " << s3d_mesh_face_count(mesh) << " faces to "
              << out << " (" << s3d_mesh_timing_ms(mesh) << " ms)" << std::endl;
  }
};

struct Serve {
  std::string ckpt, host = "127.0.0.1", cors_origin = "*", log_path;
  int port = 8080, workers = 2;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("serve", "Serve /api/health and /api/infer over HTTP");
    c->add_option("--ckpt", ckpt, "Checkpoint file")->required();
    c->add_option("--host", host, "Listen address")->capture_default_str();
    c->add_option("--port", port, "Listen port (0: any free port; SKETCH3D_PORT overrides)")->capture_default_str();
    c->add_option("--workers", workers, "Concurrent inferences")->capture_default_str()->check(CLI::PositiveNumber);
    c->add_option("--cors-origin", cors_origin, "Access-Control-Allow-Origin value")->capture_default_str();
    c->add_option("--log", log_path, "Append the request log here instead of stderr");
    c->callback([this] { run(); });
  }

  void run() {
    json o = {{"host", host}, {"port", port}, {"workers", workers}, {"cors_origin", cors_origin}};
    if (!log_path.empty()) o["log_path"] = log_path;
    Model model(ckpt);
    s3d_server* server = nullptr;
    check(s3d_server_create(model.p, o.dump().c_str(), &server), "serve");
    struct Free {
      s3d_server* s;
      ~Free() { s3d_server_free(s); }
    } guard{server};

    // The server threads inherit the blocked mask; this thread waits.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);
    int bound = 0;
    check(s3d_server_start(server, &bound), "serve");
    o["port"] = bound;
    o["checkpoint_id"] = s3d_model_checkpoint_id(model.p);
    print_config("serve", o);
    std::cout << "listening on http://" << host << ":" << bound << std::endl;
    int sig = 0;
    sigwait(&signals, &sig);
    s3d_server_stop(server);
    std::cout << "stopped" << std::endl;
  }
};

struct Bench {
  std::string ckpt, sketch, json_out;
  int iters = 50, threads = 1, warmup = 3;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("bench", "Time inference from PNG bytes to mesh");
    c->add_option("--ckpt", ckpt, "Checkpoint file")->required();
    c->add_option("--sketch", sketch, "Sketch PNG")->required();
    c->add_option("--iters", iters, "Timed iterations (at least 10)")->capture_default_str();
    c->add_option("--threads", threads, "Worker threads sharing the iterations")->capture_default_str();
    c->add_option("--warmup", warmup, "Untimed iterations first")->capture_default_str();
    c->add_option("--json", json_out, "Also write the report as JSON");
    c->callback([this] { run(); });
  }

  void run() {
    const json o = {{"iters", iters}, {"threads", threads}, {"warmup", warmup}};
    print_config("bench", {{"ckpt", ckpt}, {"sketch", sketch}, {"options", o}});
    LibString report;
    check(s3d_benchmark(ckpt.c_str(), sketch.c_str(), o.dump().c_str(), &report.p), "bench");
    json r = report.parse();
    std::cout << r["text"].get<std::string>();
    if (!json_out.empty()) {
      r.erase("text");
      write_text(json_out, r.dump(2) + "\n");
    }
  }
};

struct GradCheck {
  double eps = 1e-3;
  std::uint64_t seed = 0;
  std::string json_out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences (float64)");
    c->add_option("--eps", eps, "Finite-difference step")->capture_default_str();
    c->add_option("--seed", seed, "Seed for test points")->capture_default_str();
    c->add_option("--json", json_out, "Also write the report as JSON");
    c->callback([this] { run(); });
  }

  void run() {
    const json o = {{"eps", eps}, {"seed", seed}};
    print_config("gradcheck", o);
    LibString report;
    int passed = 0;
    check(s3d_gradcheck(o.dump().c_str(), &passed, &report.p), "gradcheck");
    json r = report.parse();
    std::cout << r["text"].get<std::string>();
    if (!json_out.empty()) {
      r.erase("text");
      write_text(json_out, r.dump(2) + "\n");
    }
    if (!passed) throw RuntimeFailure{"gradcheck: some checks exceeded their tolerance"};
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sketch to 3D mesh: dataset generation, training, evaluation, inference and serving"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", s3d_version());
  GenData gen;
  Train train;
  Eval eval;
  Infer infer;
  Serve serve;
  Bench bench;
  GradCheck gradcheck;
  gen.add(app);
  train.add(app);
  eval.add(app);
  infer.add(app);
  serve.add(app);
  bench.add(app);
  gradcheck.add(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  } catch (const RuntimeFailure& e) {
    std::cerr << "error: " << e.message << std::endl;
    return e.exit_code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kRuntimeError;
  }
  return 0;
}
