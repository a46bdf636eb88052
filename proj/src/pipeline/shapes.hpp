#pragma once

#include <string>
#include <vector>

#include "common/random.hpp"
#include "mesh/mesh.hpp"

namespace s3d {

/// Procedural families in generation order.
const std::vector<std::string>& shape_families();

/// One jittered watertight member of `family`, centred near the origin and
/// inside radius 0.45.
Mesh make_family_shape(const std::string& family, Rng& rng);

/// Axis-aligned box with `segments` subdivisions per edge.
Mesh make_subdivided_box(const Vec3& half_extent, int segments);

/// Closed cylinder along +y.
Mesh make_cylinder(double radius, double half_height, int segments, int rings);

}  // namespace s3d
