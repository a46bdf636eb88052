#include "pipeline/shapes.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "common/errors.hpp"

namespace s3d {

namespace {

constexpr double kMaxRadius = 0.45;

Mesh fit_radius(Mesh m) {
  double r = 0;
  for (const auto& v : m.vertices) r = std::max(r, std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]));
  return r > kMaxRadius ? scaled(m, kMaxRadius / r) : m;
}

std::array<double, 9> rotation_xyz(double rx, double ry, double rz) {
  const double a = rx * std::numbers::pi / 180, b = ry * std::numbers::pi / 180, c = rz * std::numbers::pi / 180;
  const double ca = std::cos(a), sa = std::sin(a), cb = std::cos(b), sb = std::sin(b), cc = std::cos(c),
               sc = std::sin(c);
  // Rz * Ry * Rx
  return {cc * cb, cc * sb * sa - sc * ca, cc * sb * ca + sc * sa,
          sc * cb, sc * sb * sa + cc * ca, sc * sb * ca - cc * sa,
          -sb,     cb * sa,                cb * ca};
}

// Exit distance along unit direction d of a ray from the origin.
double sphere_exit(const Vec3& d, const Vec3& c, double r) {
  const double dc = d[0] * c[0] + d[1] * c[1] + d[2] * c[2];
  const double cc = c[0] * c[0] + c[1] * c[1] + c[2] * c[2];
  return dc + std::sqrt(std::max(0.0, dc * dc - cc + r * r));
}

double box_exit(const Vec3& d, const Vec3& lo, const Vec3& hi) {
  double t = 1e300;
  for (int i = 0; i < 3; ++i) {
    if (d[i] > 1e-12) t = std::min(t, hi[i] / d[i]);
    if (d[i] < -1e-12) t = std::min(t, lo[i] / d[i]);
  }
  return t;
}

double ellipsoid_exit(const Vec3& d, const Vec3& axes) {
  double q = 0;
  for (int i = 0; i < 3; ++i) q += (d[i] / axes[i]) * (d[i] / axes[i]);
  return 1.0 / std::sqrt(q);
}

// A union of convex parts that each contain the origin is star-shaped about
// it, so pushing icosphere directions out to the largest exit distance
// gives a watertight surface without self-intersections.
Mesh make_composite(Rng& rng) {
  const Vec3 cap_c{rng.uniform(-0.04, 0.04), rng.uniform(0.08, 0.16), rng.uniform(-0.04, 0.04)};
  const double cap_r = rng.uniform(0.22, 0.3);
  const Vec3 lo{-rng.uniform(0.22, 0.32), -rng.uniform(0.28, 0.36), -rng.uniform(0.1, 0.2)};
  const Vec3 hi{rng.uniform(0.22, 0.32), rng.uniform(-0.08, 0.0) + 0.1, rng.uniform(0.1, 0.2)};
  const Vec3 ell{rng.uniform(0.08, 0.12), rng.uniform(0.3, 0.42), rng.uniform(0.08, 0.12)};
  Mesh m = make_icosphere(4);
  for (auto& v : m.vertices) {
    const double t = std::max({sphere_exit(v, cap_c, cap_r), box_exit(v, lo, hi), ellipsoid_exit(v, ell)});
    for (auto& x : v) x *= t;
  }
  return rotated(m, rotation_xyz(0, rng.uniform(-40, 40), 0));
}

}  // namespace

const std::vector<std::string>& shape_families() {
  static const std::vector<std::string> kFamilies{"sphere", "box", "ellipsoid", "cylinder", "composite"};
  return kFamilies;
}

Mesh make_subdivided_box(const Vec3& half, int segments) {
  if (segments < 1) throw InvalidArgument("box: segments must be positive");
  Mesh m;
  std::map<std::array<int, 3>, std::int32_t> index;
  auto vertex = [&](int i, int j, int k) {
    const std::array<int, 3> key{i, j, k};
    auto [it, inserted] = index.try_emplace(key, static_cast<std::int32_t>(m.vertices.size()));
    if (inserted) {
      m.vertices.push_back({half[0] * (2.0 * i / segments - 1), half[1] * (2.0 * j / segments - 1),
                            half[2] * (2.0 * k / segments - 1)});
    }
    return it->second;
  };
  // For each side: fixed axis, its value (0 or segments), and the two free axes
  // ordered so that (u x v) points outward.
  struct Side {
    int axis, value, u, v;
  };
  const Side sides[6] = {{0, segments, 1, 2}, {0, 0, 2, 1}, {1, segments, 2, 0},
                         {1, 0, 0, 2},        {2, segments, 0, 1}, {2, 0, 1, 0}};
  for (const Side& s : sides) {
    for (int a = 0; a < segments; ++a) {
      for (int b = 0; b < segments; ++b) {
        auto at = [&](int da, int db) {
          std::array<int, 3> c{};
          c[static_cast<std::size_t>(s.axis)] = s.value;
          c[static_cast<std::size_t>(s.u)] = a + da;
          c[static_cast<std::size_t>(s.v)] = b + db;
          return vertex(c[0], c[1], c[2]);
        };
        const auto p00 = at(0, 0), p10 = at(1, 0), p11 = at(1, 1), p01 = at(0, 1);
        m.faces.push_back({p00, p10, p11});
        m.faces.push_back({p00, p11, p01});
      }
    }
  }
  return m;
}

Mesh make_cylinder(double radius, double half_height, int segments, int rings) {
  if (segments < 3 || rings < 1) throw InvalidArgument("cylinder: need segments >= 3 and rings >= 1");
  Mesh m;
  const auto ring_start = [&](int r) { return static_cast<std::int32_t>(r * segments); };
  for (int r = 0; r <= rings; ++r) {
    const double y = -half_height + 2.0 * half_height * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double a = 2 * std::numbers::pi * s / segments;
      m.vertices.push_back({radius * std::cos(a), y, -radius * std::sin(a)});
    }
  }
  for (int r = 0; r < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      const std::int32_t a = ring_start(r) + s, b = ring_start(r) + (s + 1) % segments;
      const std::int32_t c = ring_start(r + 1) + (s + 1) % segments, d = ring_start(r + 1) + s;
      m.faces.push_back({a, b, c});
      m.faces.push_back({a, c, d});
    }
  }
  const auto bottom = static_cast<std::int32_t>(m.vertices.size());
  m.vertices.push_back({0, -half_height, 0});
  const auto top = static_cast<std::int32_t>(m.vertices.size());
  m.vertices.push_back({0, half_height, 0});
  for (int s = 0; s < segments; ++s) {
    const std::int32_t a = s, b = (s + 1) % segments;
    m.faces.push_back({bottom, b, a});
    m.faces.push_back({top, ring_start(rings) + a, ring_start(rings) + b});
  }
  return m;
}

Mesh make_family_shape(const std::string& family, Rng& rng) {
  if (family == "sphere") {
    const Vec3 offset{rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03)};
    return fit_radius(translated(scaled(make_icosphere(3), rng.uniform(0.3, 0.42)), offset));
  }
  if (family == "box") {
    const Vec3 half{rng.uniform(0.15, 0.28), rng.uniform(0.15, 0.28), rng.uniform(0.15, 0.28)};
    return fit_radius(rotated(make_subdivided_box(half, 6), rotation_xyz(rng.uniform(-15, 15), rng.uniform(-45, 45), 0)));
  }
  if (family == "ellipsoid") {
    Mesh m = make_icosphere(3);
    const Vec3 axes{rng.uniform(0.18, 0.42), rng.uniform(0.18, 0.42), rng.uniform(0.18, 0.42)};
    for (auto& v : m.vertices)
      for (int i = 0; i < 3; ++i) v[static_cast<std::size_t>(i)] *= axes[static_cast<std::size_t>(i)];
    return fit_radius(rotated(m, rotation_xyz(0, rng.uniform(-45, 45), rng.uniform(-20, 20))));
  }
  if (family == "cylinder") {
    const Mesh m = make_cylinder(rng.uniform(0.15, 0.28), rng.uniform(0.2, 0.36), 32, 4);
    return fit_radius(rotated(m, rotation_xyz(rng.uniform(-15, 15), 0, rng.uniform(-20, 20))));
  }
  if (family == "composite") return fit_radius(make_composite(rng));
  throw InvalidArgument("unknown shape family '" + family + "'");
}

}  // namespace s3d
