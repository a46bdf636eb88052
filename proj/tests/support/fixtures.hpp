#pragma once

#include <cmath>

#include "mesh/mesh.hpp"

namespace s3d::test_support {

inline Mesh make_box(double half) {
  Mesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.push_back({(i & 1) ? half : -half, (i & 2) ? half : -half, (i & 4) ? half : -half});
  }
  // Two outward-wound triangles per side.
  m.faces = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
             {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return m;
}

inline Mesh make_regular_tetrahedron() {
  // Unit edge length.
  const double s = 1.0 / (2.0 * std::sqrt(2.0));
  Mesh m;
  m.vertices = {{s, s, s}, {s, -s, -s}, {-s, s, -s}, {-s, -s, s}};
  m.faces = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
  return m;
}

}  // namespace s3d::test_support
