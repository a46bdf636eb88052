#include "pipeline/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "common/sha256.hpp"
#include "mesh/obj_io.hpp"
#include "pipeline/shapes.hpp"

namespace s3d {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json manifest_json(const DatasetManifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"id", e.id},
                       {"category", e.category},
                       {"sketch", e.sketch},
                       {"mesh", e.mesh},
                       {"pose", {{"azimuth", e.pose.azimuth}, {"elevation", e.pose.elevation}, {"distance", e.pose.distance}}}});
  }
  return {{"version", m.version}, {"entries", entries}, {"splits", {{"train", m.train}, {"test", m.test}}}};
}

}  // namespace

const DatasetEntry& DatasetManifest::entry(const std::string& id) const {
  for (const auto& e : entries) {
    if (e.id == id) return e;
  }
  throw InvalidArgument("dataset: unknown entry id '" + id + "'");
}

std::vector<std::string> DatasetManifest::select(const std::string& split,
                                                 const std::vector<std::string>& categories) const {
  std::vector<std::string> ids;
  if (split == "train") {
    ids = train;
  } else if (split == "test") {
    ids = test;
  } else if (split == "all") {
    for (const auto& e : entries) ids.push_back(e.id);
  } else {
    throw InvalidArgument("dataset: unknown split '" + split + "' (expected train, test or all)");
  }
  if (categories.empty()) return ids;
  std::vector<std::string> out;
  for (const auto& id : ids) {
    const auto& cat = entry(id).category;
    if (std::find(categories.begin(), categories.end(), cat) != categories.end()) out.push_back(id);
  }
  return out;
}

std::vector<std::string> default_categories(int count) {
  const auto& all = shape_families();
  if (count < 1 || count > static_cast<int>(all.size())) {
    throw InvalidArgument("dataset: categories must lie in [1," + std::to_string(all.size()) + "], got " +
                          std::to_string(count));
  }
  return {all.begin(), all.begin() + count};
}

GrayImage sketch_from_silhouette(const Silhouette<double>& s) {
  const int r = s.resolution;
  GrayImage img{r, r, std::vector<std::uint8_t>(static_cast<std::size_t>(r * r), 255)};
  auto inside = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < r && y < r && s.values.at(static_cast<std::size_t>(y * r + x)) > 0.5;
  };
  for (int y = 0; y < r; ++y) {
    for (int x = 0; x < r; ++x) {
      if (!inside(x, y)) continue;
      if (!inside(x - 1, y) || !inside(x + 1, y) || !inside(x, y - 1) || !inside(x, y + 1)) {
        img.pixels[static_cast<std::size_t>(y * r + x)] = 0;
      }
    }
  }
  return img;
}

DatasetManifest generate_synthetic_dataset(const fs::path& out_dir, const DatasetOptions& options) {
  if (options.per_category < 2) throw InvalidArgument("dataset: per_category must be at least 2");
  if (options.categories.empty()) throw InvalidArgument("dataset: no categories");
  if (!(options.test_fraction > 0.0 && options.test_fraction < 1.0)) {
    throw InvalidArgument("dataset: test_fraction must lie in (0,1)");
  }
  RenderConfig probe;
  probe.resolution = options.resolution;
  probe.validate();
  const auto& families = shape_families();
  for (const auto& c : options.categories) {
    if (std::find(families.begin(), families.end(), c) == families.end()) {
      throw InvalidArgument("dataset: unknown category '" + c + "'");
    }
  }

  std::error_code ec;
  fs::create_directories(out_dir / "meshes", ec);
  fs::create_directories(out_dir / "sketches", ec);
  if (ec || !fs::is_directory(out_dir / "sketches")) {
    throw IoError("cannot create dataset directory '" + out_dir.string() + "'");
  }

  DatasetManifest m;
  m.root = out_dir;
  const CameraPose canonical = CameraPose::make(0, 0, kDefaultCameraDistance);
  const int n = options.per_category;
  const int n_test = std::clamp(static_cast<int>(std::lround(n * options.test_fraction)), 1, n - 1);
  for (std::size_t ci = 0; ci < options.categories.size(); ++ci) {
    const std::string& cat = options.categories[ci];
    const auto family_index = static_cast<std::uint64_t>(std::find(families.begin(), families.end(), cat) - families.begin());
    for (int i = 0; i < n; ++i) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%03d", cat.c_str(), i);
      Rng rng(mix_seed(mix_seed(options.seed, family_index), static_cast<std::uint64_t>(i)));
      const Mesh mesh = make_family_shape(cat, rng);
      DatasetEntry e{id, cat, std::string("sketches/") + id + ".png", std::string("meshes/") + id + ".obj", canonical};
      save_obj(mesh, out_dir / e.mesh);
      write_png((out_dir / e.sketch).string(), sketch_from_silhouette(rasterize_hard(mesh, e.pose, options.resolution)));
      (i < n - n_test ? m.train : m.test).push_back(e.id);
      m.entries.push_back(std::move(e));
    }
  }
  save_manifest(m);
  json hashes = {{"algorithm", "sha256"}, {"files", dataset_hashes(m)}};
  write_text(out_dir / "hashes.json", hashes.dump(2) + "\n");
  return m;
}

void save_manifest(const DatasetManifest& manifest) {
  write_text(manifest.root / "manifest.json", manifest_json(manifest).dump(2) + "\n");
}

DatasetManifest load_manifest(const fs::path& root) {
  const fs::path path = root / "manifest.json";
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw FormatError("manifest '" + path.string() + "': " + e.what());
  }
  DatasetManifest m;
  m.root = root;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != 1) throw FormatError("manifest: unsupported version " + std::to_string(m.version));
    for (const auto& e : j.at("entries")) {
      const auto& p = e.at("pose");
      m.entries.push_back({e.at("id").get<std::string>(), e.at("category").get<std::string>(),
                           e.at("sketch").get<std::string>(), e.at("mesh").get<std::string>(),
                           CameraPose::make(p.at("azimuth").get<double>(), p.at("elevation").get<double>(),
                                            p.at("distance").get<double>())});
    }
    m.train = j.at("splits").at("train").get<std::vector<std::string>>();
    m.test = j.at("splits").at("test").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError("manifest '" + path.string() + "': " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError("manifest '" + path.string() + "': " + e.what());
  }

  std::set<std::string> ids;
  for (const auto& e : m.entries) {
    if (!ids.insert(e.id).second) throw FormatError("manifest: duplicate id '" + e.id + "'");
    for (const auto& rel : {e.sketch, e.mesh}) {
      if (!fs::is_regular_file(root / rel)) throw IoError("manifest: missing file '" + (root / rel).string() + "'");
    }
  }
  std::set<std::string> seen;
  for (const auto* split : {&m.train, &m.test}) {
    for (const auto& id : *split) {
      if (!ids.count(id)) throw FormatError("manifest: split refers to unknown id '" + id + "'");
      if (!seen.insert(id).second) throw FormatError("manifest: id '" + id + "' appears in more than one split");
    }
  }
  return m;
}

std::map<std::string, std::string> dataset_hashes(const DatasetManifest& manifest) {
  std::map<std::string, std::string> out;
  out["manifest.json"] = sha256_file((manifest.root / "manifest.json").string());
  for (const auto& e : manifest.entries) {
    out[e.sketch] = sha256_file((manifest.root / e.sketch).string());
    out[e.mesh] = sha256_file((manifest.root / e.mesh).string());
  }
  return out;
}

std::vector<std::string> verify_dataset_hashes(const DatasetManifest& manifest) {
  json recorded;
  try {
    recorded = json::parse(read_text(manifest.root / "hashes.json")).at("files");
  } catch (const json::exception& e) {
    throw FormatError(std::string("hashes.json: ") + e.what());
  }
  std::vector<std::string> bad;
  for (const auto& [rel, digest] : dataset_hashes(manifest)) {
    if (!recorded.contains(rel) || recorded.at(rel).get<std::string>() != digest) bad.push_back(rel);
  }
  return bad;
}

}  // namespace s3d
