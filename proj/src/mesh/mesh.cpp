#include "mesh/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>
#include <unordered_map>

#include "tensor/ops.hpp"

namespace s3d {

void Mesh::validate() const {
  const auto n = static_cast<std::int64_t>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& face = faces[f];
    for (auto idx : face) {
      if (idx < 0 || idx >= n) {
        throw InvalidArgument("mesh: face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                              " outside [0," + std::to_string(n) + ")");
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw InvalidArgument("mesh: face " + std::to_string(f) + " repeats a vertex index");
    }
  }
}

MeshTopology::MeshTopology(std::size_t vertex_count, const std::vector<Face>& faces) {
  struct EdgeUse {
    std::int32_t opposite[2] = {-1, -1};
    int count = 0;
  };
  std::map<std::pair<std::int32_t, std::int32_t>, EdgeUse> edges;
  std::vector<std::vector<std::int32_t>> adjacency(vertex_count);
  for (const Face& f : faces) {
    for (int e = 0; e < 3; ++e) {
      const std::int32_t a = f[e], b = f[(e + 1) % 3], c = f[(e + 2) % 3];
      auto& use = edges[{std::min(a, b), std::max(a, b)}];
      if (use.count < 2) use.opposite[use.count] = c;
      ++use.count;
      adjacency[static_cast<std::size_t>(a)].push_back(b);
      adjacency[static_cast<std::size_t>(b)].push_back(a);
    }
  }
  offsets_.assign(vertex_count + 1, 0);
  for (std::size_t v = 0; v < vertex_count; ++v) {
    auto& nb = adjacency[v];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    offsets_[v + 1] = offsets_[v] + nb.size();
    neighbors_.insert(neighbors_.end(), nb.begin(), nb.end());
  }
  edge_count_ = edges.size();
  for (const auto& [key, use] : edges) {
    if (use.count == 2) {
      interior_.push_back({key.first, key.second, use.opposite[0], use.opposite[1]});
    } else if (use.count == 1) {
      ++boundary_;
    }
    if (use.count != 2) watertight_ = false;
  }
  if (faces.empty()) watertight_ = false;
}

Mesh make_icosphere(int subdivisions) {
  if (subdivisions < 0 || subdivisions > 5) {
    throw InvalidArgument("make_icosphere: subdivisions must lie in [0,5], got " + std::to_string(subdivisions));
  }
  const double t = std::numbers::phi;
  Mesh m;
  m.vertices = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  auto normalize = [](Vec3 v) {
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    return Vec3{v[0] / n, v[1] / n, v[2] / n};
  };
  for (auto& v : m.vertices) v = normalize(v);

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::pair<std::int32_t, std::int32_t>, std::int32_t> midpoint;
    auto mid = [&](std::int32_t a, std::int32_t b) {
      const auto key = std::make_pair(std::min(a, b), std::max(a, b));
      if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
      const Vec3& pa = m.vertices[static_cast<std::size_t>(a)];
      const Vec3& pb = m.vertices[static_cast<std::size_t>(b)];
      m.vertices.push_back(normalize({(pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2, (pa[2] + pb[2]) / 2}));
      const auto idx = static_cast<std::int32_t>(m.vertices.size() - 1);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(m.faces.size() * 4);
    for (const Face& f : m.faces) {
      const std::int32_t ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    m.faces = std::move(next);
  }
  return m;
}

Mesh scaled(const Mesh& mesh, double factor) {
  Mesh out = mesh;
  for (auto& v : out.vertices) {
    for (auto& c : v) c *= factor;
  }
  return out;
}

Mesh translated(const Mesh& mesh, const Vec3& offset) {
  Mesh out = mesh;
  for (auto& v : out.vertices) {
    for (int k = 0; k < 3; ++k) v[k] += offset[k];
  }
  return out;
}

Mesh rotated(const Mesh& mesh, const std::array<double, 9>& r) {
  Mesh out = mesh;
  for (auto& v : out.vertices) {
    const Vec3 p = v;
    for (int i = 0; i < 3; ++i) v[i] = r[3 * i] * p[0] + r[3 * i + 1] * p[1] + r[3 * i + 2] * p[2];
  }
  return out;
}

Mesh rotated_y(const Mesh& mesh, double degrees) {
  const double a = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  return rotated(mesh, {c, 0, s, 0, 1, 0, -s, 0, c});
}

namespace {
Vec3 sub3(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 cross3(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
}  // namespace

double surface_area(const Mesh& mesh) {
  double total = 0;
  for (const Face& f : mesh.faces) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Vec3 n = cross3(sub3(mesh.vertices[static_cast<std::size_t>(f[1])], a),
                          sub3(mesh.vertices[static_cast<std::size_t>(f[2])], a));
    total += 0.5 * std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
  }
  return total;
}

double signed_volume(const Mesh& mesh) {
  double total = 0;
  for (const Face& f : mesh.faces) {
    const Vec3& a = mesh.vertices[static_cast<std::size_t>(f[0])];
    const Vec3 bc = cross3(mesh.vertices[static_cast<std::size_t>(f[1])], mesh.vertices[static_cast<std::size_t>(f[2])]);
    total += a[0] * bc[0] + a[1] * bc[1] + a[2] * bc[2];
  }
  return total / 6.0;
}

template <typename T>
Tensor<T> vertices_tensor(const Mesh& mesh, bool requires_grad) {
  std::vector<T> values;
  values.reserve(mesh.vertices.size() * 3);
  for (const auto& v : mesh.vertices) {
    for (double c : v) values.push_back(static_cast<T>(c));
  }
  return Tensor<T>::from({mesh.vertices.size(), 3}, std::move(values), requires_grad);
}

template <typename T>
Tensor<T> apply_offsets(const Mesh& tmpl, const Tensor<T>& offsets) {
  const Shape expected{tmpl.vertices.size(), 3};
  if (offsets.shape() != expected) {
    throw InvalidArgument("apply_offsets: offsets shape " + shape_str(offsets.shape()) +
                          " does not match template vertices " + shape_str(expected));
  }
  return add(vertices_tensor<T>(tmpl), offsets);
}

template <typename T>
Mesh mesh_from_tensor(const Tensor<T>& vertices, const std::vector<Face>& faces) {
  if (vertices.dim() != 2 || vertices.size(1) != 3) {
    throw InvalidArgument("mesh_from_tensor: expected [N,3] vertices, got " + shape_str(vertices.shape()));
  }
  Mesh m;
  const auto v = vertices.values();
  m.vertices.resize(vertices.size(0));
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    m.vertices[i] = {static_cast<double>(v[3 * i]), static_cast<double>(v[3 * i + 1]), static_cast<double>(v[3 * i + 2])};
  }
  m.faces = faces;
  m.validate();
  return m;
}

template Tensor<float> vertices_tensor(const Mesh&, bool);
template Tensor<double> vertices_tensor(const Mesh&, bool);
template Tensor<float> apply_offsets(const Mesh&, const Tensor<float>&);
template Tensor<double> apply_offsets(const Mesh&, const Tensor<double>&);
template Mesh mesh_from_tensor(const Tensor<float>&, const std::vector<Face>&);
template Mesh mesh_from_tensor(const Tensor<double>&, const std::vector<Face>&);

}  // namespace s3d
