#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "common/image_io.hpp"
#include "render/rasterizer.hpp"

namespace s3d {

struct DatasetEntry {
  std::string id;
  std::string category;
  std::string sketch;  // relative to the dataset root
  std::string mesh;
  CameraPose pose;
};

struct DatasetManifest {
  std::filesystem::path root;
  int version = 1;
  std::vector<DatasetEntry> entries;
  std::vector<std::string> train;
  std::vector<std::string> test;

  const DatasetEntry& entry(const std::string& id) const;
  std::filesystem::path sketch_path(const DatasetEntry& e) const { return root / e.sketch; }
  std::filesystem::path mesh_path(const DatasetEntry& e) const { return root / e.mesh; }
  /// Ids of `split` ("train", "test" or "all") whose category is in `categories` (all when empty).
  std::vector<std::string> select(const std::string& split, const std::vector<std::string>& categories = {}) const;
};

struct DatasetOptions {
  std::vector<std::string> categories;  // shape family names
  int per_category = 10;
  int resolution = 128;                 // sketch side in pixels
  std::uint64_t seed = 0;
  double test_fraction = 0.2;
};

/// First `count` shape families, in generation order.
std::vector<std::string> default_categories(int count);

/// Writes meshes/<id>.obj, sketches/<id>.png, manifest.json and hashes.json
/// under `out_dir`. Output is byte-identical for equal options.
DatasetManifest generate_synthetic_dataset(const std::filesystem::path& out_dir, const DatasetOptions& options);

/// Boundary of a hard silhouette: inside pixels with a 4-neighbour outside
/// (or on the image border). Stroke pixels are 0, background 255.
GrayImage sketch_from_silhouette(const Silhouette<double>& silhouette);

/// Parses root/manifest.json and checks that every referenced file exists,
/// ids are unique, and splits are disjoint and refer to known ids.
DatasetManifest load_manifest(const std::filesystem::path& root);
void save_manifest(const DatasetManifest& manifest);

/// SHA-256 of manifest.json and every referenced file, keyed by relative path.
std::map<std::string, std::string> dataset_hashes(const DatasetManifest& manifest);

/// Compares against root/hashes.json; returns the mismatching paths.
std::vector<std::string> verify_dataset_hashes(const DatasetManifest& manifest);

}  // namespace s3d
