#include "mesh/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "common/random.hpp"

namespace s3d {

std::size_t VoxelGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(occupancy.begin(), occupancy.end(), std::uint8_t{1}));
}

Vec3 VoxelGrid::center(int ix, int iy, int iz) const {
  const int idx[3] = {ix, iy, iz};
  Vec3 c{};
  for (int k = 0; k < 3; ++k) c[k] = lo[k] + (hi[k] - lo[k]) * (idx[k] + 0.5) / resolution;
  return c;
}

VoxelGrid voxelize(const Mesh& mesh, int resolution) {
  if (resolution < 8 || resolution > 128) {
    throw InvalidArgument("voxelize: resolution must lie in [8,128], got " + std::to_string(resolution));
  }
  mesh.validate();
  MeshTopology topo(mesh.vertices.size(), mesh.faces);
  if (!topo.watertight()) {
    throw InvalidArgument("voxelize: mesh is not watertight (" + std::to_string(topo.boundary_edge_count()) +
                          " boundary edges); inside/outside is undefined");
  }
  VoxelGrid grid;
  grid.resolution = resolution;
  const auto r = static_cast<std::size_t>(resolution);
  grid.occupancy.assign(r * r * r, 0);

  struct Tri {
    Vec3 a, b, c;
    double ymin, ymax, zmin, zmax;
  };
  std::vector<Tri> tris;
  tris.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces) {
    Tri t{mesh.vertices[static_cast<std::size_t>(f[0])], mesh.vertices[static_cast<std::size_t>(f[1])],
          mesh.vertices[static_cast<std::size_t>(f[2])], 0, 0, 0, 0};
    t.ymin = std::min({t.a[1], t.b[1], t.c[1]});
    t.ymax = std::max({t.a[1], t.b[1], t.c[1]});
    t.zmin = std::min({t.a[2], t.b[2], t.c[2]});
    t.zmax = std::max({t.a[2], t.b[2], t.c[2]});
    tris.push_back(t);
  }

  // Rays are nudged off the voxel-centre lattice by irrational-looking
  // offsets so they never graze an edge or vertex of axis-aligned inputs.
  const double nudge_y = 1.2345678e-7, nudge_z = 2.7182818e-7;
  std::vector<double> hits;
  for (int iz = 0; iz < resolution; ++iz) {
    for (int iy = 0; iy < resolution; ++iy) {
      const Vec3 c0 = grid.center(0, iy, iz);
      const double py = c0[1] + nudge_y, pz = c0[2] + nudge_z;
      hits.clear();
      for (const Tri& t : tris) {
        if (py < t.ymin || py > t.ymax || pz < t.zmin || pz > t.zmax) continue;
        // Barycentric coordinates of (py,pz) in the yz-projection.
        const double d = (t.b[1] - t.a[1]) * (t.c[2] - t.a[2]) - (t.c[1] - t.a[1]) * (t.b[2] - t.a[2]);
        if (d == 0.0) continue;
        const double u = ((py - t.a[1]) * (t.c[2] - t.a[2]) - (t.c[1] - t.a[1]) * (pz - t.a[2])) / d;
        const double v = ((t.b[1] - t.a[1]) * (pz - t.a[2]) - (py - t.a[1]) * (t.b[2] - t.a[2])) / d;
        if (u < 0.0 || v < 0.0 || u + v > 1.0) continue;
        hits.push_back(t.a[0] + u * (t.b[0] - t.a[0]) + v * (t.c[0] - t.a[0]));
      }
      if (hits.empty()) continue;
      std::sort(hits.begin(), hits.end());
      std::size_t crossed = 0;
      for (int ix = 0; ix < resolution; ++ix) {
        const double x = grid.center(ix, iy, iz)[0];
        while (crossed < hits.size() && hits[crossed] < x) ++crossed;
        if (crossed % 2 == 1) grid.occupancy[(static_cast<std::size_t>(iz) * r + iy) * r + ix] = 1;
      }
    }
  }
  return grid;
}

double voxel_iou(const VoxelGrid& a, const VoxelGrid& b) {
  if (a.resolution != b.resolution || a.lo != b.lo || a.hi != b.hi || a.occupancy.size() != b.occupancy.size()) {
    throw InvalidArgument("voxel_iou: grids differ in resolution or bounds (" + std::to_string(a.resolution) +
                          " vs " + std::to_string(b.resolution) + ")");
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.occupancy.size(); ++i) {
    inter += (a.occupancy[i] && b.occupancy[i]) ? 1 : 0;
    uni += (a.occupancy[i] || b.occupancy[i]) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

PointSample sample_surface(const Mesh& mesh, std::size_t count, std::uint64_t seed) {
  mesh.validate();
  std::vector<double> cumulative;
  cumulative.reserve(mesh.faces.size());
  double total = 0;
  for (const auto& f : mesh.faces) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
    const Vec3 u{b[0] - a[0], b[1] - a[1], b[2] - a[2]};
    const Vec3 v{c[0] - a[0], c[1] - a[1], c[2] - a[2]};
    const double cx = u[1] * v[2] - u[2] * v[1], cy = u[2] * v[0] - u[0] * v[2], cz = u[0] * v[1] - u[1] * v[0];
    total += 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw InvalidArgument("sample_surface: mesh has zero surface area");

  Rng rng(seed);
  PointSample out;
  out.points.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pick = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const auto& f = mesh.faces[static_cast<std::size_t>(it - cumulative.begin())];
    const double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
    const double wa = 1.0 - r1, wb = r1 * (1.0 - r2), wc = r1 * r2;
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Vec3& b = mesh.vertices[static_cast<std::size_t>(f[1])];
    const Vec3& c = mesh.vertices[static_cast<std::size_t>(f[2])];
    out.points.push_back({wa * a[0] + wb * b[0] + wc * c[0], wa * a[1] + wb * b[1] + wc * c[1],
                          wa * a[2] + wb * b[2] + wc * c[2]});
  }
  return out;
}

namespace {

// Uniform bucket grid over a point set for exact nearest-neighbour queries.
class NearestGrid {
 public:
  explicit NearestGrid(const std::vector<Vec3>& points) : points_(points) {
    lo_ = hi_ = points.front();
    for (const auto& p : points) {
      for (int k = 0; k < 3; ++k) {
        lo_[k] = std::min(lo_[k], p[k]);
        hi_[k] = std::max(hi_[k], p[k]);
      }
    }
    double extent = 0;
    for (int k = 0; k < 3; ++k) extent = std::max(extent, hi_[k] - lo_[k]);
    const double cells_per_axis = std::max(1.0, std::cbrt(static_cast<double>(points.size()) / 2.0));
    cell_ = extent > 0 ? extent / cells_per_axis : 1.0;
    for (int k = 0; k < 3; ++k) dims_[k] = std::max(1, static_cast<int>((hi_[k] - lo_[k]) / cell_) + 1);
    const std::size_t n = static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
    std::vector<std::size_t> counts(n + 1, 0);
    for (const auto& p : points) ++counts[cell_index(cell_of(p)) + 1];
    for (std::size_t i = 0; i < n; ++i) counts[i + 1] += counts[i];
    start_ = counts;
    members_.resize(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) members_[counts[cell_index(cell_of(points[i]))]++] = i;
  }

  double nearest_sq(const Vec3& q) const {
    std::array<int, 3> c = cell_of(q);
    double best = std::numeric_limits<double>::infinity();
    for (int ring = 0;; ++ring) {
      for (int dz = -ring; dz <= ring; ++dz) {
        for (int dy = -ring; dy <= ring; ++dy) {
          for (int dx = -ring; dx <= ring; ++dx) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            const std::array<int, 3> cc{c[0] + dx, c[1] + dy, c[2] + dz};
            if (cc[0] < 0 || cc[1] < 0 || cc[2] < 0 || cc[0] >= dims_[0] || cc[1] >= dims_[1] || cc[2] >= dims_[2]) {
              continue;
            }
            const std::size_t ci = cell_index(cc);
            for (std::size_t m = start_[ci]; m < start_[ci + 1]; ++m) {
              const Vec3& p = points_[members_[m]];
              const double d = (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) + (p[2] - q[2]) * (p[2] - q[2]);
              best = std::min(best, d);
            }
          }
        }
      }
      // Every unvisited cell is at least `ring` cells from the query cell.
      const double reach = ring * cell_;
      if (best <= reach * reach) return best;
      if (ring > dims_[0] + dims_[1] + dims_[2]) return best;
    }
  }

 private:
  std::array<int, 3> cell_of(const Vec3& p) const {
    std::array<int, 3> c{};
    for (int k = 0; k < 3; ++k) {
      c[k] = std::clamp(static_cast<int>(std::floor((p[k] - lo_[k]) / cell_)), 0, dims_[k] - 1);
    }
    return c;
  }
  std::size_t cell_index(const std::array<int, 3>& c) const {
    return (static_cast<std::size_t>(c[2]) * dims_[1] + c[1]) * dims_[0] + c[0];
  }

  const std::vector<Vec3>& points_;
  Vec3 lo_{}, hi_{};
  double cell_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::size_t> start_;
  std::vector<std::size_t> members_;
};

double directed_mean_sq(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
  NearestGrid grid(to);
  double total = 0;
  for (const auto& p : from) total += grid.nearest_sq(p);
  return total / static_cast<double>(from.size());
}

}  // namespace

double chamfer_distance(const PointSample& a, const PointSample& b) {
  if (a.points.empty() || b.points.empty()) throw InvalidArgument("chamfer_distance: empty point set");
  return directed_mean_sq(a.points, b.points) + directed_mean_sq(b.points, a.points);
}

double chamfer_distance(const Mesh& a, const Mesh& b, std::size_t samples, std::uint64_t seed) {
  if (samples < 100) throw InvalidArgument("chamfer_distance: need at least 100 samples, got " + std::to_string(samples));
  return chamfer_distance(sample_surface(a, samples, seed), sample_surface(b, samples, seed));
}

}  // namespace s3d
