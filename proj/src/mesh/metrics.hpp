#pragma once

#include <cstdint>
#include <vector>

#include "mesh/mesh.hpp"

namespace s3d {

/// Occupancy of voxel centres over an axis-aligned box.
struct VoxelGrid {
  int resolution = 0;
  Vec3 lo{-1, -1, -1};
  Vec3 hi{1, 1, 1};
  std::vector<std::uint8_t> occupancy;  // x fastest, then y, then z

  std::size_t occupied_count() const;
  Vec3 center(int ix, int iy, int iz) const;
  bool at(int ix, int iy, int iz) const {
    return occupancy[(static_cast<std::size_t>(iz) * resolution + iy) * resolution + ix] != 0;
  }
};

/// Marks a voxel occupied iff its centre is inside the mesh, by the parity of
/// crossings along +x. Bounds are [-1,1]^3; resolution must lie in [8,128].
/// Throws InvalidArgument for non-watertight meshes.
VoxelGrid voxelize(const Mesh& mesh, int resolution);

/// |a and b| / |a or b|; 1 when both are empty.
double voxel_iou(const VoxelGrid& a, const VoxelGrid& b);

struct PointSample {
  std::vector<Vec3> points;
};

/// Area-uniform surface samples, deterministic in `seed`.
PointSample sample_surface(const Mesh& mesh, std::size_t count, std::uint64_t seed);

/// mean_a min_b |a-b|^2 + mean_b min_a |a-b|^2 on explicit point sets.
double chamfer_distance(const PointSample& a, const PointSample& b);

/// Chamfer distance between `samples`-point area-uniform samples of each
/// mesh, both drawn with the same seed. Requires samples >= 100.
double chamfer_distance(const Mesh& a, const Mesh& b, std::size_t samples, std::uint64_t seed);

}  // namespace s3d
