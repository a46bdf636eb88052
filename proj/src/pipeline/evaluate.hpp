#pragma once

#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pipeline/dataset.hpp"
#include "pipeline/infer.hpp"

namespace s3d {

struct EvalOptions {
  int voxel_resolution = 32;
  std::size_t chamfer_samples = 2048;
  std::uint64_t seed = 0;
  std::string split = "test";
  std::vector<std::string> categories;  // empty: all
};

struct EntryMetrics {
  std::string id, category;
  double voxel_iou = 0.0;
  double chamfer = 0.0;
  std::string error;  // non-empty when generation or scoring failed
};

struct MetricsRow {
  std::string category;
  std::size_t count = 0;
  double voxel_iou = 0.0;
  double chamfer = 0.0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;  // per category, in manifest order
  MetricsRow mean;               // arithmetic mean of the rows
  std::vector<EntryMetrics> entries;
  std::vector<EntryMetrics> failures;
  int voxel_resolution = 0;
  std::size_t chamfer_samples = 0;
  std::uint64_t seed = 0;
  std::string checkpoint_id;

  std::string to_text() const;
};

void to_json(nlohmann::json& j, const MetricsTable& t);

using MeshPredictor = std::function<Mesh(const DatasetEntry&, const GrayImage& sketch)>;

/// Scores `predict` on every selected entry against its ground-truth mesh.
MetricsTable evaluate_predictor(const MeshPredictor& predict, const DatasetManifest& data, const EvalOptions& options,
                                const std::string& label);

MetricsTable evaluate(const InferenceEngine& engine, const DatasetManifest& data, const EvalOptions& options);

/// Voxel IoU and Chamfer side by side for several labelled tables.
std::string comparison_table(const std::vector<std::pair<std::string, MetricsTable>>& tables);

struct BenchmarkReport {
  int iters = 0;
  int threads = 0;
  double mean_ms = 0, p50_ms = 0, p95_ms = 0, min_ms = 0, max_ms = 0;
  std::string checkpoint_id;
  std::string hardware;
};

void to_json(nlohmann::json& j, const BenchmarkReport& r);
std::string benchmark_text(const BenchmarkReport& r);

/// Times infer_png end to end (decode through mesh) after `warmup`
/// untimed runs; `threads` workers share the iterations.
BenchmarkReport benchmark_runtime(const InferenceEngine& engine, const std::vector<std::uint8_t>& png, int iters,
                                  int threads, int warmup = 3);

/// CPU model and logical core count of this machine.
std::string hardware_description();

}  // namespace s3d
