#pragma once

#include "mesh/mesh.hpp"

namespace s3d {

/// Mean over vertices of |v - mean(neighbours(v))|^2, uniform weights.
/// Throws InvalidArgument when a vertex has no neighbours. The recorded
/// backward pass refers to `topology`, which must outlive the graph.
template <typename T>
Tensor<T> laplacian_loss(const Tensor<T>& vertices, const MeshTopology& topology);

/// Sum over interior edges of (cos(theta) + 1)^2, where theta is the angle
/// between the two faces at the edge, measured so that coplanar faces give
/// theta = pi. Boundary edges are skipped.
template <typename T>
Tensor<T> flatten_loss(const Tensor<T>& vertices, const MeshTopology& topology);

double laplacian_loss(const Mesh& mesh);

struct FlattenReport {
  double value = 0.0;
  bool no_interior_edges = false;
};
FlattenReport flatten_loss(const Mesh& mesh);

}  // namespace s3d
