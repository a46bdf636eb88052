#include "pipeline/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "mesh/metrics.hpp"
#include "mesh/obj_io.hpp"

namespace s3d {

using nlohmann::json;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) { return s.size() >= w ? s : s + std::string(w - s.size(), ' '); }
std::string lpad(const std::string& s, std::size_t w) { return s.size() >= w ? s : std::string(w - s.size(), ' ') + s; }

json row_json(const MetricsRow& r) {
  return {{"category", r.category}, {"count", r.count}, {"voxel_iou", r.voxel_iou}, {"chamfer", r.chamfer}};
}

json entry_json(const EntryMetrics& e) {
  json j = {{"id", e.id}, {"category", e.category}, {"voxel_iou", e.voxel_iou}, {"chamfer", e.chamfer}};
  if (!e.error.empty()) j["error"] = e.error;
  return j;
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

MetricsTable evaluate_predictor(const MeshPredictor& predict, const DatasetManifest& data, const EvalOptions& options,
                                const std::string& label) {
  const auto ids = data.select(options.split, options.categories);
  if (ids.empty()) throw InvalidArgument("evaluate: the selected " + options.split + " split is empty");
  MetricsTable t;
  t.voxel_resolution = options.voxel_resolution;
  t.chamfer_samples = options.chamfer_samples;
  t.seed = options.seed;
  t.checkpoint_id = label;

  std::vector<std::string> order;
  std::map<std::string, MetricsRow> acc;
  for (const auto& id : ids) {
    const auto& e = data.entry(id);
    if (!acc.count(e.category)) {
      order.push_back(e.category);
      acc[e.category].category = e.category;
    }
    EntryMetrics m{e.id, e.category, 0.0, 0.0, ""};
    try {
      const Mesh truth = load_obj(data.mesh_path(e));
      const Mesh pred = predict(e, read_png(data.sketch_path(e).string()));
      m.voxel_iou = voxel_iou(voxelize(pred, options.voxel_resolution), voxelize(truth, options.voxel_resolution));
      m.chamfer = chamfer_distance(pred, truth, options.chamfer_samples, options.seed);
    } catch (const std::exception& ex) {
      m.error = ex.what();
      t.failures.push_back(m);
      t.entries.push_back(m);
      continue;
    }
    auto& row = acc[e.category];
    row.count += 1;
    row.voxel_iou += m.voxel_iou;
    row.chamfer += m.chamfer;
    t.entries.push_back(m);
  }
  for (const auto& cat : order) {
    MetricsRow r = acc[cat];
    if (r.count == 0) continue;
    r.voxel_iou /= static_cast<double>(r.count);
    r.chamfer /= static_cast<double>(r.count);
    t.rows.push_back(r);
  }
  t.mean.category = "mean";
  for (const auto& r : t.rows) {
    t.mean.count += r.count;
    t.mean.voxel_iou += r.voxel_iou;
    t.mean.chamfer += r.chamfer;
  }
  if (!t.rows.empty()) {
    t.mean.voxel_iou /= static_cast<double>(t.rows.size());
    t.mean.chamfer /= static_cast<double>(t.rows.size());
  }
  return t;
}

MetricsTable evaluate(const InferenceEngine& engine, const DatasetManifest& data, const EvalOptions& options) {
  return evaluate_predictor([&](const DatasetEntry&, const GrayImage& sketch) { return engine.infer(sketch).mesh; },
                            data, options, engine.checkpoint_id());
}

std::string MetricsTable::to_text() const {
  std::ostringstream out;
  out << "checkpoint " << checkpoint_id << "  voxel R=" << voxel_resolution << "  chamfer samples=" << chamfer_samples
      << "  seed=" << seed << "\n";
  out << pad("category", 12) << lpad("n", 5) << lpad("voxel IoU", 12) << lpad("chamfer", 12) << "\n";
  for (const auto& row : rows) {
    out << pad(row.category, 12) << lpad(std::to_string(row.count), 5) << lpad(fmt("%.4f", row.voxel_iou), 12)
        << lpad(fmt("%.5f", row.chamfer), 12) << "\n";
  }
  out << pad("mean", 12) << lpad(std::to_string(mean.count), 5) << lpad(fmt("%.4f", mean.voxel_iou), 12)
      << lpad(fmt("%.5f", mean.chamfer), 12) << "\n";
  for (const auto& f : failures) out << "failed " << f.id << ": " << f.error << "\n";
  return out.str();
}

void to_json(json& j, const MetricsTable& t) {
  json rows = json::array(), entries = json::array(), failures = json::array();
  for (const auto& r : t.rows) rows.push_back(row_json(r));
  for (const auto& e : t.entries) entries.push_back(entry_json(e));
  for (const auto& e : t.failures) failures.push_back(entry_json(e));
  j = {{"rows", rows},
       {"mean", row_json(t.mean)},
       {"entries", entries},
       {"failures", failures},
       {"config", {{"voxel_resolution", t.voxel_resolution}, {"chamfer_samples", t.chamfer_samples}, {"seed", t.seed},
                   {"checkpoint_id", t.checkpoint_id}}}};
}

std::string comparison_table(const std::vector<std::pair<std::string, MetricsTable>>& tables) {
  std::vector<std::string> cats;
  for (const auto& [label, t] : tables) {
    for (const auto& r : t.rows) {
      if (std::find(cats.begin(), cats.end(), r.category) == cats.end()) cats.push_back(r.category);
    }
  }
  cats.push_back("mean");
  std::size_t w = 12;
  for (const auto& [label, t] : tables) w = std::max(w, label.size() + 2);
  std::ostringstream out;
  for (const char* metric : {"voxel IoU", "chamfer"}) {
    out << pad(metric, w);
    for (const auto& c : cats) out << lpad(c, 12);
    out << "\n";
    for (const auto& [label, t] : tables) {
      out << pad(label, w);
      for (const auto& c : cats) {
        const MetricsRow* row = c == "mean" ? &t.mean : nullptr;
        for (const auto& r : t.rows) {
          if (r.category == c) row = &r;
        }
        const bool iou = std::string(metric) == "voxel IoU";
        out << lpad(row ? fmt(iou ? "%.4f" : "%.5f", iou ? row->voxel_iou : row->chamfer) : "-", 12);
      }
      out << "\n";
    }
    out << "\n";
  }
  return out.str();
}

std::string hardware_description() {
  std::string model = "unknown CPU";
  std::ifstream in("/proc/cpuinfo");
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("model name", 0) == 0) {
      model = line.substr(line.find(':') + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::max(1u, std::thread::hardware_concurrency())) + " logical cores";
}

void to_json(json& j, const BenchmarkReport& r) {
  j = {{"iters", r.iters},
       {"threads", r.threads},
       {"mean_ms", r.mean_ms},
       {"p50_ms", r.p50_ms},
       {"p95_ms", r.p95_ms},
       {"min_ms", r.min_ms},
       {"max_ms", r.max_ms},
       {"checkpoint_id", r.checkpoint_id},
       {"hardware", r.hardware},
       {"published_reference",
        {{"gpu_seconds", 0.011},
         {"cpu_seconds", 0.062},
         {"note", "published figures for the full-size model on the authors' hardware; not comparable with this toy "
                  "measurement"}}}};
}

std::string benchmark_text(const BenchmarkReport& r) {
  std::ostringstream out;
  out << "published reference (full-size model, other hardware, NOT comparable): GPU 0.011 s, CPU 0.062 s\n";
  out << "hardware: " << r.hardware << "\n";
  out << "checkpoint " << r.checkpoint_id << ", iters " << r.iters << ", threads " << r.threads << "\n";
  out << "mean " << fmt("%.3f", r.mean_ms) << " ms  p50 " << fmt("%.3f", r.p50_ms) << " ms  p95 "
      << fmt("%.3f", r.p95_ms) << " ms  min " << fmt("%.3f", r.min_ms) << " ms  max " << fmt("%.3f", r.max_ms)
      << " ms\n";
  return out.str();
}

BenchmarkReport benchmark_runtime(const InferenceEngine& engine, const std::vector<std::uint8_t>& png, int iters,
                                  int threads, int warmup) {
  if (iters < 10) throw InvalidArgument("benchmark: iters must be at least 10");
  if (threads < 1) throw InvalidArgument("benchmark: threads must be at least 1");
  for (int i = 0; i < warmup; ++i) engine.infer_png(png);

  std::vector<double> times(static_cast<std::size_t>(iters));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < iters; i = next++) times[static_cast<std::size_t>(i)] = engine.infer_png(png).timing_ms;
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  BenchmarkReport r;
  r.iters = iters;
  r.threads = threads;
  double total = 0;
  for (double t : times) total += t;
  r.mean_ms = total / iters;
  r.p50_ms = percentile(times, 0.5);
  r.p95_ms = percentile(times, 0.95);
  r.min_ms = *std::min_element(times.begin(), times.end());
  r.max_ms = *std::max_element(times.begin(), times.end());
  r.checkpoint_id = engine.checkpoint_id();
  r.hardware = hardware_description();
  return r;
}

}  // namespace s3d
