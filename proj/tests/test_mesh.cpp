#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "common/random.hpp"
#include "mesh/metrics.hpp"
#include "mesh/obj_io.hpp"
#include "mesh/regularizers.hpp"
#include "tensor/gradcheck.hpp"
#include "support/fixtures.hpp"
#include "tensor/ops.hpp"

using namespace s3d;
using test_support::make_box;
using test_support::make_regular_tetrahedron;

namespace {

Vec3 face_normal(const Mesh& m, const Face& f) {
  const Vec3& a = m.vertices[static_cast<std::size_t>(f[0])];
  const Vec3& b = m.vertices[static_cast<std::size_t>(f[1])];
  const Vec3& c = m.vertices[static_cast<std::size_t>(f[2])];
  const Vec3 u{b[0] - a[0], b[1] - a[1], b[2] - a[2]}, v{c[0] - a[0], c[1] - a[1], c[2] - a[2]};
  Vec3 n{u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]};
  const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
  for (auto& x : n) x /= len;
  return n;
}

// Independent oracle: for each pair of faces sharing an edge, the dihedral
// angle satisfies cos(theta) = -n1.n2 with outward normals.
double flatten_by_normals(const Mesh& m) {
  double total = 0;
  for (std::size_t i = 0; i < m.faces.size(); ++i) {
    for (std::size_t j = i + 1; j < m.faces.size(); ++j) {
      int shared = 0;
      for (auto a : m.faces[i])
        for (auto b : m.faces[j]) shared += (a == b);
      if (shared != 2) continue;
      const Vec3 n1 = face_normal(m, m.faces[i]), n2 = face_normal(m, m.faces[j]);
      const double c = -(n1[0] * n2[0] + n1[1] * n2[1] + n1[2] * n2[2]);
      total += (c + 1) * (c + 1);
    }
  }
  return total;
}

Mesh jittered(Mesh m, std::uint64_t seed, double amount) {
  Rng rng(seed);
  for (auto& v : m.vertices)
    for (auto& x : v) x += rng.uniform(-amount, amount);
  return m;
}

}  // namespace

TEST(Icosphere, CountsAndUnitRadius) {
  for (int k = 0; k <= 4; ++k) {
    const Mesh m = make_icosphere(k);
    const std::size_t p = std::size_t{1} << (2 * k);
    EXPECT_EQ(m.vertex_count(), 10 * p + 2);
    EXPECT_EQ(m.face_count(), 20 * p);
    for (const auto& v : m.vertices) EXPECT_NEAR(std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]), 1.0, 1e-12);
    MeshTopology topo(m.vertex_count(), m.faces);
    EXPECT_TRUE(topo.watertight());
    EXPECT_EQ(static_cast<long>(m.vertex_count()) - static_cast<long>(topo.edge_count()) +
                  static_cast<long>(m.face_count()),
              2);
    EXPECT_GT(signed_volume(m), 0.0);
  }
  EXPECT_EQ(make_icosphere(3).vertex_count(), 642u);
  EXPECT_THROW(make_icosphere(6), InvalidArgument);
  EXPECT_THROW(make_icosphere(-1), InvalidArgument);
}

TEST(Mesh, ValidateRejectsBadFaces) {
  Mesh m = make_regular_tetrahedron();
  m.faces.push_back({0, 1, 7});
  EXPECT_THROW(m.validate(), InvalidArgument);
  m.faces.back() = {0, 0, 1};
  EXPECT_THROW(m.validate(), InvalidArgument);
}

TEST(Mesh, TransformsPreserveVolumeSign) {
  const Mesh m = make_icosphere(2);
  const double v = signed_volume(m);
  EXPECT_NEAR(signed_volume(scaled(m, 2.0)), 8 * v, 1e-9);
  EXPECT_NEAR(signed_volume(rotated_y(m, 37.0)), v, 1e-9);
  EXPECT_NEAR(signed_volume(translated(m, {0.3, -0.2, 0.1})), v, 1e-9);
  const Mesh r = rotated_y(Mesh{{{1, 0, 0}}, {}}, 90.0);
  EXPECT_NEAR(r.vertices[0][0], 0.0, 1e-12);
  EXPECT_NEAR(r.vertices[0][2], -1.0, 1e-12);
}

TEST(Mesh, ApplyOffsetsShapeChecked) {
  const Mesh t = make_icosphere(1);
  EXPECT_THROW(apply_offsets(t, TensorD::zeros({3, 3})), InvalidArgument);
  const auto v = apply_offsets(t, TensorD::full({t.vertex_count(), 3}, 0.5));
  EXPECT_DOUBLE_EQ(v.at(0), t.vertices[0][0] + 0.5);
}

TEST(Regularizers, CubeFlattenMatchesNormalOracle) {
  const Mesh cube = make_box(0.5);
  EXPECT_NEAR(flatten_by_normals(cube), 12.0, 1e-12);
  EXPECT_NEAR(flatten_loss(cube).value, 12.0, 1e-9);
}

TEST(Regularizers, TetrahedronValues) {
  const Mesh tet = make_regular_tetrahedron();
  EXPECT_NEAR(flatten_by_normals(tet), 6.0 * (16.0 / 9.0), 1e-12);
  EXPECT_NEAR(flatten_loss(tet).value, 6.0 * (16.0 / 9.0), 1e-9);
  EXPECT_NEAR(laplacian_loss(tet), 2.0 / 3.0, 1e-12);
}

TEST(Regularizers, FlatSheetHasZeroFlattenLoss) {
  Mesh sheet;
  sheet.vertices = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  sheet.faces = {{0, 1, 2}, {0, 2, 3}};
  const auto r = flatten_loss(sheet);
  EXPECT_NEAR(r.value, 0.0, 1e-12);
  EXPECT_FALSE(r.no_interior_edges);
  Mesh tri{{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}}};
  EXPECT_TRUE(flatten_loss(tri).no_interior_edges);
  EXPECT_DOUBLE_EQ(flatten_loss(tri).value, 0.0);
}

TEST(Regularizers, RandomMeshesMatchNormalOracle) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Mesh m = jittered(make_icosphere(1), seed, 0.05);
    EXPECT_NEAR(flatten_loss(m).value, flatten_by_normals(m), 1e-9);
  }
}

TEST(Regularizers, LaplacianOfUniformScaling) {
  // On a sphere every vertex sits off its neighbour mean along the radius;
  // the loss scales quadratically.
  const Mesh m = make_icosphere(2);
  EXPECT_NEAR(laplacian_loss(scaled(m, 2.0)), 4.0 * laplacian_loss(m), 1e-12);
}

TEST(Regularizers, GradientsMatchFiniteDifferences) {
  const Mesh m = jittered(make_icosphere(1), 7, 0.05);
  const MeshTopology topo(m.vertex_count(), m.faces);
  const TensorD x = vertices_tensor<double>(m);
  const auto lap = grad_check([&](const TensorD& v) { return laplacian_loss(v, topo); }, x, 1e-3);
  EXPECT_LT(lap.max_relative_error, 1e-4);
  const auto flat = grad_check([&](const TensorD& v) { return flatten_loss(v, topo); }, x, 1e-3);
  EXPECT_LT(flat.max_relative_error, 1e-4);
}

TEST(ObjIo, RoundTripIsExact) {
  const Mesh m = jittered(make_icosphere(1), 3, 0.01);
  const Mesh back = parse_obj(format_obj(m));
  ASSERT_EQ(back.vertex_count(), m.vertex_count());
  ASSERT_EQ(back.faces, m.faces);
  for (std::size_t i = 0; i < m.vertex_count(); ++i) EXPECT_EQ(back.vertices[i], m.vertices[i]);
}

TEST(ObjIo, AcceptsSlashAndNegativeIndices) {
  const Mesh m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2//1 -1\n");
  ASSERT_EQ(m.face_count(), 1u);
  EXPECT_EQ(m.faces[0], (Face{0, 1, 2}));
}

TEST(ObjIo, RejectsQuadsAndBadIndices) {
  try {
    parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
    FAIL() << "quad accepted";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("only triangular faces are supported"), std::string::npos);
  }
  EXPECT_THROW(parse_obj("v 0 0 0\nf 1 2 3\n"), FormatError);
  EXPECT_THROW(parse_obj("v 0 zero 0\n"), FormatError);
  EXPECT_THROW(load_obj("/nonexistent/mesh.obj"), IoError);
}

TEST(ObjIo, SaveAndLoadFile) {
  const auto path = std::filesystem::temp_directory_path() / "s3d_test_mesh.obj";
  const Mesh m = make_icosphere(1);
  save_obj(m, path.string());
  const Mesh back = load_obj(path.string());
  EXPECT_EQ(back.faces, m.faces);
  std::filesystem::remove(path);
}

TEST(Voxelize, AxisAlignedCubeCount) {
  // Half-size 0.5 in a 2-unit box at 32^3: centres inside for 16 per axis.
  const VoxelGrid g = voxelize(make_box(0.5), 32);
  EXPECT_EQ(g.occupied_count(), 16u * 16u * 16u);
  EXPECT_TRUE(g.at(16, 16, 16));
  EXPECT_FALSE(g.at(0, 16, 16));
}

TEST(Voxelize, NestedCubesIou) {
  const VoxelGrid outer = voxelize(make_box(0.5), 32);
  const VoxelGrid inner = voxelize(make_box(0.25), 32);
  EXPECT_EQ(inner.occupied_count(), 8u * 8u * 8u);
  EXPECT_NEAR(voxel_iou(outer, inner), 512.0 / 4096.0, 1e-12);
  EXPECT_DOUBLE_EQ(voxel_iou(outer, outer), 1.0);
}

TEST(Voxelize, SphereFillFraction) {
  // A unit sphere fills pi/6 of the [-1,1]^3 box.
  const VoxelGrid g = voxelize(make_icosphere(3), 64);
  const double frac = static_cast<double>(g.occupied_count()) / (64.0 * 64.0 * 64.0);
  EXPECT_NEAR(frac, std::numbers::pi / 6.0, 0.02 * std::numbers::pi / 6.0);
}

TEST(Voxelize, RejectsOpenMeshAndBadResolution) {
  Mesh open = make_box(0.5);
  open.faces.pop_back();
  EXPECT_THROW(voxelize(open, 32), InvalidArgument);
  EXPECT_THROW(voxelize(make_box(0.5), 4), InvalidArgument);
  EXPECT_THROW(voxelize(make_box(0.5), 256), InvalidArgument);
  EXPECT_THROW(voxel_iou(voxelize(make_box(0.5), 16), voxelize(make_box(0.5), 32)), InvalidArgument);
}

TEST(Chamfer, IdenticalMeshesAreZero) {
  const Mesh m = make_icosphere(2);
  EXPECT_DOUBLE_EQ(chamfer_distance(m, m, 2000, 5), 0.0);
  EXPECT_THROW(chamfer_distance(m, m, 50, 5), InvalidArgument);
}

TEST(Chamfer, ScaledSphere) {
  // Radii 1 and 1.1: each direction contributes about 0.1^2.
  const Mesh a = make_icosphere(3);
  const double cd = chamfer_distance(a, scaled(a, 1.1), 10000, 17);
  EXPECT_GT(cd, 0.019);
  EXPECT_LT(cd, 0.024);
}

TEST(Chamfer, MatchesBruteForce) {
  const auto pa = sample_surface(make_icosphere(2), 400, 1);
  const auto pb = sample_surface(scaled(make_icosphere(1), 0.8), 300, 2);
  auto directed = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    double total = 0;
    for (const auto& p : from) {
      double best = 1e300;
      for (const auto& q : to) {
        const double d = (p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) + (p[2] - q[2]) * (p[2] - q[2]);
        best = std::min(best, d);
      }
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  EXPECT_NEAR(chamfer_distance(pa, pb), directed(pa.points, pb.points) + directed(pb.points, pa.points), 1e-12);
}
