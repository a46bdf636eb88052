#include "mesh/regularizers.hpp"

#include <string>

#include "tensor/ops.hpp"

namespace s3d {

template <typename T>
Tensor<T> laplacian_loss(const Tensor<T>& vertices, const MeshTopology& topology) {
  const std::size_t n = topology.vertex_count();
  if (vertices.shape() != Shape{n, 3}) {
    throw InvalidArgument("laplacian_loss: vertices " + shape_str(vertices.shape()) + " do not match topology of " +
                          std::to_string(n) + " vertices");
  }
  if (n == 0) throw InvalidArgument("laplacian_loss: empty mesh");
  const auto v = vertices.values();
  std::vector<T> delta(n * 3);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto nb = topology.neighbors(i);
    if (nb.empty()) {
      throw InvalidArgument("laplacian_loss: vertex " + std::to_string(i) + " has no neighbours (non-manifold input)");
    }
    const T inv = T(1) / static_cast<T>(nb.size());
    for (int k = 0; k < 3; ++k) {
      T centroid = 0;
      for (auto j : nb) centroid += v[3 * static_cast<std::size_t>(j) + k];
      const T d = v[3 * i + k] - centroid * inv;
      delta[3 * i + k] = d;
      total += d * d;
    }
  }
  const T inv_n = T(1) / static_cast<T>(n);
  auto saved = std::make_shared<std::vector<T>>(std::move(delta));
  const MeshTopology* topo = &topology;
  return make_op_result<T>("laplacian_loss", {}, {total * inv_n}, {vertices},
                           [saved, topo, inv_n](TensorNode<T>& self) {
                             auto& dv = self.inputs[0]->ensure_grad();
                             const T g = self.grad[0] * T(2) * inv_n;
                             const auto& d = *saved;
                             for (std::size_t i = 0; i < topo->vertex_count(); ++i) {
                               const auto nb = topo->neighbors(i);
                               const T share = T(1) / static_cast<T>(nb.size());
                               for (int k = 0; k < 3; ++k) {
                                 const T gi = g * d[3 * i + k];
                                 dv[3 * i + k] += gi;
                                 for (auto j : nb) dv[3 * static_cast<std::size_t>(j) + k] -= gi * share;
                               }
                             }
                           });
}

template <typename T>
Tensor<T> flatten_loss(const Tensor<T>& vertices, const MeshTopology& topology) {
  const auto& edges = topology.interior_edges();
  if (edges.empty()) return Tensor<T>::scalar(T(0));
  std::vector<std::int32_t> ia, ib, il, ir;
  for (const auto& e : edges) {
    ia.push_back(e.a);
    ib.push_back(e.b);
    il.push_back(e.opposite_left);
    ir.push_back(e.opposite_right);
  }
  // For each edge, the in-plane perpendiculars from the edge line to the two
  // opposite vertices. Their angle is the dihedral angle (pi when flat).
  const T eps = T(1e-12);
  const auto va = gather_rows(vertices, ia);
  const auto edge = sub(gather_rows(vertices, ib), va);
  const auto to_left = sub(gather_rows(vertices, il), va);
  const auto to_right = sub(gather_rows(vertices, ir), va);
  const auto edge_sq = add_scalar(sum_axis(square(edge), 1, true), eps);
  const auto perp_left = sub(to_left, mul(edge, div(sum_axis(mul(edge, to_left), 1, true), edge_sq)));
  const auto perp_right = sub(to_right, mul(edge, div(sum_axis(mul(edge, to_right), 1, true), edge_sq)));
  const auto len_left = add_scalar(sum_axis(square(perp_left), 1), eps);
  const auto len_right = add_scalar(sum_axis(square(perp_right), 1), eps);
  const auto cos_theta = div(sum_axis(mul(perp_left, perp_right), 1), sqrt(mul(len_left, len_right)));
  return sum(square(add_scalar(cos_theta, T(1))));
}

double laplacian_loss(const Mesh& mesh) {
  mesh.validate();
  MeshTopology topo(mesh.vertices.size(), mesh.faces);
  NoGradGuard no_grad;
  return laplacian_loss(vertices_tensor<double>(mesh), topo).item();
}

FlattenReport flatten_loss(const Mesh& mesh) {
  mesh.validate();
  MeshTopology topo(mesh.vertices.size(), mesh.faces);
  NoGradGuard no_grad;
  FlattenReport report;
  report.no_interior_edges = topo.interior_edges().empty();
  report.value = flatten_loss(vertices_tensor<double>(mesh), topo).item();
  return report;
}

template Tensor<float> laplacian_loss(const Tensor<float>&, const MeshTopology&);
template Tensor<double> laplacian_loss(const Tensor<double>&, const MeshTopology&);
template Tensor<float> flatten_loss(const Tensor<float>&, const MeshTopology&);
template Tensor<double> flatten_loss(const Tensor<double>&, const MeshTopology&);

}  // namespace s3d
