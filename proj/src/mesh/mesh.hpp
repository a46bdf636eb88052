#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "tensor/tensor.hpp"

namespace s3d {

using Vec3 = std::array<double, 3>;
using Face = std::array<std::int32_t, 3>;

/// Triangle mesh in world units. Faces wind counter-clockwise seen from outside.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t face_count() const { return faces.size(); }

  /// Throws InvalidArgument on out-of-range or repeated face indices.
  void validate() const;
};

/// Edge/neighbour structure derived once from a face list.
class MeshTopology {
 public:
  struct InteriorEdge {
    std::int32_t a, b;          // shared edge
    std::int32_t opposite_left;  // third vertex of the first face
    std::int32_t opposite_right; // third vertex of the second face
  };

  MeshTopology(std::size_t vertex_count, const std::vector<Face>& faces);

  std::size_t vertex_count() const { return offsets_.size() - 1; }
  std::span<const std::int32_t> neighbors(std::size_t v) const {
    return {neighbors_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }
  const std::vector<InteriorEdge>& interior_edges() const { return interior_; }
  std::size_t boundary_edge_count() const { return boundary_; }
  std::size_t edge_count() const { return edge_count_; }
  /// Every edge shared by exactly two faces.
  bool watertight() const { return watertight_; }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<std::int32_t> neighbors_;
  std::vector<InteriorEdge> interior_;
  std::size_t boundary_ = 0;
  std::size_t edge_count_ = 0;
  bool watertight_ = true;
};

/// Unit-radius icosphere centred at the origin; subdivisions in [0, 5].
Mesh make_icosphere(int subdivisions);

Mesh scaled(const Mesh& mesh, double factor);
Mesh translated(const Mesh& mesh, const Vec3& offset);
/// Rotation about +y by `degrees` (right-handed).
Mesh rotated_y(const Mesh& mesh, double degrees);
Mesh rotated(const Mesh& mesh, const std::array<double, 9>& row_major_rotation);

double surface_area(const Mesh& mesh);
/// Signed volume by the divergence theorem; positive for outward winding.
double signed_volume(const Mesh& mesh);

template <typename T>
Tensor<T> vertices_tensor(const Mesh& mesh, bool requires_grad = false);

/// template + offsets, differentiable with identity Jacobian in the offsets.
template <typename T>
Tensor<T> apply_offsets(const Mesh& tmpl, const Tensor<T>& offsets);

/// Plain mesh from [N,3] vertex values and a face list.
template <typename T>
Mesh mesh_from_tensor(const Tensor<T>& vertices, const std::vector<Face>& faces);

}  // namespace s3d
