#include "render/rasterizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <string>

namespace s3d {

namespace {

std::atomic<std::uint64_t> g_near_clamps{0};

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

struct P2 {
  double x, y;
};

double cross2(P2 o, P2 a, P2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

// Squared distance from p to segment ab and the clamped parameter of the
// closest point.
double segment_dist_sq(P2 p, P2 a, P2 b, double& t) {
  const double ex = b.x - a.x, ey = b.y - a.y;
  const double len_sq = ex * ex + ey * ey;
  t = len_sq > 0.0 ? std::clamp(((p.x - a.x) * ex + (p.y - a.y) * ey) / len_sq, 0.0, 1.0) : 0.0;
  const double qx = a.x + t * ex - p.x, qy = a.y + t * ey - p.y;
  return qx * qx + qy * qy;
}

struct BoundaryHit {
  double dist_sq;
  int edge;  // 0: v0-v1, 1: v1-v2, 2: v2-v0
  double t;
};

BoundaryHit boundary_distance(P2 p, const P2 (&v)[3]) {
  BoundaryHit best{0, 0, 0};
  for (int e = 0; e < 3; ++e) {
    double t = 0;
    const double d = segment_dist_sq(p, v[e], v[(e + 1) % 3], t);
    if (e == 0 || d < best.dist_sq) best = {d, e, t};
  }
  return best;
}

bool inside_triangle(P2 p, const P2 (&v)[3]) {
  const double area = cross2(v[0], v[1], v[2]);
  if (area == 0.0) return false;
  const double w0 = cross2(v[0], v[1], p), w1 = cross2(v[1], v[2], p), w2 = cross2(v[2], v[0], p);
  if (area > 0) return w0 >= 0 && w1 >= 0 && w2 >= 0;
  return w0 <= 0 && w1 <= 0 && w2 <= 0;
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Pixel centres of a square image in ndc; column i and row j.
double pixel_x(int i, int res) { return 2.0 * (i + 0.5) / res - 1.0; }
double pixel_y(int j, int res) { return 1.0 - 2.0 * (j + 0.5) / res; }

struct PixelRange {
  int i0, i1, j0, j1;  // inclusive; empty when i0 > i1 or j0 > j1
};

PixelRange covered_pixels(const P2 (&v)[3], double margin, int res) {
  const double xmin = std::min({v[0].x, v[1].x, v[2].x}) - margin;
  const double xmax = std::max({v[0].x, v[1].x, v[2].x}) + margin;
  const double ymin = std::min({v[0].y, v[1].y, v[2].y}) - margin;
  const double ymax = std::max({v[0].y, v[1].y, v[2].y}) + margin;
  const double half = 0.5 * res;
  PixelRange r{};
  r.i0 = static_cast<int>(std::max(0.0, std::ceil((xmin + 1.0) * half - 0.5)));
  r.i1 = static_cast<int>(std::min(res - 1.0, std::floor((xmax + 1.0) * half - 0.5)));
  r.j0 = static_cast<int>(std::max(0.0, std::ceil((1.0 - ymax) * half - 0.5)));
  r.j1 = static_cast<int>(std::min(res - 1.0, std::floor((1.0 - ymin) * half - 0.5)));
  return r;
}

template <typename T>
void load_triangle(std::span<const T> ndc, const Face& f, P2 (&v)[3]) {
  for (int k = 0; k < 3; ++k) {
    const auto row = static_cast<std::size_t>(f[static_cast<std::size_t>(k)]) * 3;
    v[k] = {static_cast<double>(ndc[row]), static_cast<double>(ndc[row + 1])};
  }
}

void check_faces(const std::vector<Face>& faces, std::size_t vertex_count, const char* op) {
  for (const auto& f : faces) {
    for (auto i : f) {
      if (i < 0 || static_cast<std::size_t>(i) >= vertex_count) {
        throw InvalidArgument(std::string(op) + ": face index " + std::to_string(i) + " out of range for " +
                              std::to_string(vertex_count) + " vertices");
      }
    }
  }
}

struct Contribution {
  std::int32_t face;
  double d;      // D_j
  double one_m;  // 1 - D_j, computed without cancellation
};

// Contributions grouped by pixel (CSR) for the backward pass.
struct RasterTape {
  int resolution = 0;
  double sigma = 0;
  std::vector<std::size_t> start;  // resolution^2 + 1
  std::vector<Contribution> items;
};

}  // namespace

double influence_radius(double sigma) {
  // sigmoid(-x) < 1e-8 for x > ln(1e8) ~ 18.42.
  return std::sqrt(18.420680743952367 * sigma);
}

std::uint64_t near_plane_clamp_count() { return g_near_clamps.load(); }

template <typename T>
Tensor<T> project_ndc(const Tensor<T>& vertices, const CameraPose& pose, const RenderConfig& config) {
  config.validate();
  if (vertices.dim() != 2 || vertices.size(1) != 3) {
    throw InvalidArgument("project_ndc: expected vertices [V,3], got " + shape_str(vertices.shape()));
  }
  const CameraFrame fr = camera_frame(pose, config.fov_degrees);
  const std::size_t n = vertices.size(0);
  const auto v = vertices.values();
  std::vector<T> out(n * 3);
  auto clamped = std::make_shared<std::vector<std::uint8_t>>(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 rel{v[3 * i] - fr.eye[0], v[3 * i + 1] - fr.eye[1], v[3 * i + 2] - fr.eye[2]};
    double z = dot(rel, fr.forward);
    if (z < config.near_plane) {
      z = config.near_plane;
      (*clamped)[i] = 1;
      g_near_clamps.fetch_add(1);
    }
    out[3 * i] = static_cast<T>(dot(rel, fr.right) / (z * fr.tan_half_fov));
    out[3 * i + 1] = static_cast<T>(dot(rel, fr.up) / (z * fr.tan_half_fov));
    out[3 * i + 2] = static_cast<T>(z);
  }
  return make_op_result<T>("project_ndc", {n, 3}, std::move(out), {vertices}, [fr, clamped, n](TensorNode<T>& self) {
    auto& dv = self.inputs[0]->ensure_grad();
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t i = 0; i < n; ++i) {
      const double z = y[3 * i + 2], t = fr.tan_half_fov;
      const double xt = y[3 * i] * t, yt = y[3 * i + 1] * t;
      const bool c = (*clamped)[i] != 0;
      for (int k = 0; k < 3; ++k) {
        // d(x_ndc)/d(rel) = (right - x t forward) / (z t); forward terms vanish when clamped.
        const double dx = (fr.right[k] - (c ? 0.0 : xt * fr.forward[k])) / (z * t);
        const double dy = (fr.up[k] - (c ? 0.0 : yt * fr.forward[k])) / (z * t);
        const double dz = c ? 0.0 : fr.forward[k];
        dv[3 * i + k] += static_cast<T>(g[3 * i] * dx + g[3 * i + 1] * dy + g[3 * i + 2] * dz);
      }
    }
  });
}

template <typename T>
Tensor<T> project_vertices(const Tensor<T>& vertices, const CameraPose& pose, const RenderConfig& config) {
  Tensor<T> ndc = project_ndc(vertices, pose, config);
  const std::size_t n = ndc.size(0);
  const double half = 0.5 * config.resolution;
  const auto s = ndc.values();
  std::vector<T> out(n * 3);
  for (std::size_t i = 0; i < n; ++i) {
    out[3 * i] = static_cast<T>((s[3 * i] + 1.0) * half);
    out[3 * i + 1] = static_cast<T>((1.0 - s[3 * i + 1]) * half);
    out[3 * i + 2] = s[3 * i + 2];
  }
  return make_op_result<T>("ndc_to_pixels", {n, 3}, std::move(out), {ndc}, [half, n](TensorNode<T>& self) {
    auto& d = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      d[3 * i] += static_cast<T>(self.grad[3 * i] * half);
      d[3 * i + 1] -= static_cast<T>(self.grad[3 * i + 1] * half);
      d[3 * i + 2] += self.grad[3 * i + 2];
    }
  });
}

template <typename T>
Tensor<T> soft_rasterize_ndc(const Tensor<T>& ndc, const std::vector<Face>& faces, const RenderConfig& config) {
  config.validate();
  if (ndc.dim() != 2 || ndc.size(1) != 3) {
    throw InvalidArgument("soft_rasterize: expected projected vertices [V,3], got " + shape_str(ndc.shape()));
  }
  check_faces(faces, ndc.size(0), "soft_rasterize");
  const int res = config.resolution;
  const auto npix = static_cast<std::size_t>(res) * static_cast<std::size_t>(res);
  const double sigma = config.sigma;
  const double margin = influence_radius(sigma);
  const double margin_sq = margin * margin;
  const auto coords = ndc.values();

  struct Raw {
    std::int32_t pixel;
    Contribution c;
  };
  std::vector<Raw> raw;
  std::vector<std::size_t> counts(npix + 1, 0);
  for (std::size_t fi = 0; fi < faces.size(); ++fi) {
    P2 v[3];
    load_triangle(coords, faces[fi], v);
    const PixelRange r = covered_pixels(v, margin, res);
    for (int j = r.j0; j <= r.j1; ++j) {
      for (int i = r.i0; i <= r.i1; ++i) {
        const P2 p{pixel_x(i, res), pixel_y(j, res)};
        const bool in = inside_triangle(p, v);
        const double d2 = boundary_distance(p, v).dist_sq;
        if (!in && d2 > margin_sq) continue;
        const double arg = (in ? d2 : -d2) / sigma;
        const auto pix = static_cast<std::int32_t>(j * res + i);
        raw.push_back({pix, {static_cast<std::int32_t>(fi), stable_sigmoid(arg), stable_sigmoid(-arg)}});
        ++counts[static_cast<std::size_t>(pix) + 1];
      }
    }
  }

  auto tape = std::make_shared<RasterTape>();
  tape->resolution = res;
  tape->sigma = sigma;
  for (std::size_t p = 0; p < npix; ++p) counts[p + 1] += counts[p];
  tape->start = counts;
  tape->items.resize(raw.size());
  for (const Raw& r : raw) tape->items[counts[static_cast<std::size_t>(r.pixel)]++] = r.c;
  raw.clear();
  raw.shrink_to_fit();

  std::vector<T> out(npix);
  for (std::size_t p = 0; p < npix; ++p) {
    double keep = 1.0;
    for (std::size_t k = tape->start[p]; k < tape->start[p + 1]; ++k) keep *= tape->items[k].one_m;
    out[p] = static_cast<T>(1.0 - keep);
  }

  auto face_list = std::make_shared<const std::vector<Face>>(faces);
  return make_op_result<T>(
      "soft_rasterize", {static_cast<std::size_t>(res), static_cast<std::size_t>(res)}, std::move(out), {ndc},
      [tape, face_list](TensorNode<T>& self) {
        auto& dn = self.inputs[0]->ensure_grad();
        const auto& coords_in = self.inputs[0]->value;
        const std::span<const T> cv(coords_in.data(), coords_in.size());
        const int res_b = tape->resolution;
        std::vector<double> prefix;
        for (std::size_t p = 0; p + 1 < tape->start.size(); ++p) {
          const double g = self.grad[p];
          const std::size_t b = tape->start[p], e = tape->start[p + 1];
          if (g == 0.0 || b == e) continue;
          // Leave-one-out products of (1 - D) via prefix and running suffix.
          prefix.assign(e - b + 1, 1.0);
          for (std::size_t k = b; k < e; ++k) prefix[k - b + 1] = prefix[k - b] * tape->items[k].one_m;
          double suffix = 1.0;
          const P2 px{pixel_x(static_cast<int>(p % static_cast<std::size_t>(res_b)), res_b),
                      pixel_y(static_cast<int>(p / static_cast<std::size_t>(res_b)), res_b)};
          for (std::size_t k = e; k-- > b;) {
            const Contribution& c = tape->items[k];
            const double loo = prefix[k - b] * suffix;
            suffix *= c.one_m;
            const double d_arg = g * loo * c.d * c.one_m;
            if (d_arg == 0.0) continue;
            const Face& f = (*face_list)[static_cast<std::size_t>(c.face)];
            P2 v[3];
            load_triangle(cv, f, v);
            const bool in = inside_triangle(px, v);
            const BoundaryHit hit = boundary_distance(px, v);
            const double d_dsq = d_arg * (in ? 1.0 : -1.0) / tape->sigma;
            // d(d^2)/da = -2 (p - q)(1 - t), d(d^2)/db = -2 (p - q) t.
            const P2 a = v[hit.edge], bb = v[(hit.edge + 1) % 3];
            const double qx = a.x + hit.t * (bb.x - a.x), qy = a.y + hit.t * (bb.y - a.y);
            const double rx = -2.0 * (px.x - qx) * d_dsq, ry = -2.0 * (px.y - qy) * d_dsq;
            const auto ia = static_cast<std::size_t>(f[static_cast<std::size_t>(hit.edge)]) * 3;
            const auto ib = static_cast<std::size_t>(f[static_cast<std::size_t>((hit.edge + 1) % 3)]) * 3;
            dn[ia] += static_cast<T>(rx * (1.0 - hit.t));
            dn[ia + 1] += static_cast<T>(ry * (1.0 - hit.t));
            dn[ib] += static_cast<T>(rx * hit.t);
            dn[ib + 1] += static_cast<T>(ry * hit.t);
          }
        }
      });
}

template <typename T>
Silhouette<T> soft_rasterize(const Tensor<T>& vertices, const std::vector<Face>& faces, const CameraPose& pose,
                             const RenderConfig& config) {
  return {soft_rasterize_ndc(project_ndc(vertices, pose, config), faces, config), pose, config.resolution};
}

Silhouette<double> soft_rasterize(const Mesh& mesh, const CameraPose& pose, const RenderConfig& config) {
  mesh.validate();
  return soft_rasterize(vertices_tensor<double>(mesh), mesh.faces, pose, config);
}

Silhouette<double> rasterize_hard(const Mesh& mesh, const CameraPose& pose, int resolution, const RenderConfig& config) {
  RenderConfig cfg = config;
  cfg.resolution = resolution;
  cfg.validate();
  mesh.validate();
  NoGradGuard guard;
  const Tensor<double> ndc = project_ndc(vertices_tensor<double>(mesh), pose, cfg);
  const auto coords = ndc.values();
  const auto npix = static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution);
  std::vector<double> out(npix, 0.0);
  for (const Face& f : mesh.faces) {
    P2 v[3];
    load_triangle(coords, f, v);
    const PixelRange r = covered_pixels(v, 0.0, resolution);
    for (int j = r.j0; j <= r.j1; ++j) {
      for (int i = r.i0; i <= r.i1; ++i) {
        const std::size_t p = static_cast<std::size_t>(j) * static_cast<std::size_t>(resolution) + static_cast<std::size_t>(i);
        if (out[p] == 0.0 && inside_triangle({pixel_x(i, resolution), pixel_y(j, resolution)}, v)) out[p] = 1.0;
      }
    }
  }
  const auto side = static_cast<std::size_t>(resolution);
  return {Tensor<double>::from({side, side}, std::move(out)), pose, resolution};
}

template <typename T>
std::vector<Silhouette<T>> render_multiscale(const Tensor<T>& vertices, const std::vector<Face>& faces,
                                             const CameraPose& pose, const RenderConfig& config,
                                             const std::vector<int>& resolutions) {
  if (resolutions.empty()) throw InvalidArgument("render_multiscale: no resolutions given");
  for (std::size_t i = 1; i < resolutions.size(); ++i) {
    if (resolutions[i] <= resolutions[i - 1]) throw InvalidArgument("render_multiscale: resolutions must be strictly ascending");
  }
  // Projection is shared across scales; only the raster differs.
  const Tensor<T> ndc = project_ndc(vertices, pose, config);
  std::vector<Silhouette<T>> out;
  out.reserve(resolutions.size());
  for (int r : resolutions) {
    RenderConfig cfg = config;
    cfg.resolution = r;
    out.push_back({soft_rasterize_ndc(ndc, faces, cfg), pose, r});
  }
  return out;
}

#define S3D_INSTANTIATE_RENDER(T)                                                                                  \
  template Tensor<T> project_ndc(const Tensor<T>&, const CameraPose&, const RenderConfig&);                       \
  template Tensor<T> project_vertices(const Tensor<T>&, const CameraPose&, const RenderConfig&);                  \
  template Tensor<T> soft_rasterize_ndc(const Tensor<T>&, const std::vector<Face>&, const RenderConfig&);         \
  template Silhouette<T> soft_rasterize(const Tensor<T>&, const std::vector<Face>&, const CameraPose&,            \
                                        const RenderConfig&);                                                     \
  template std::vector<Silhouette<T>> render_multiscale(const Tensor<T>&, const std::vector<Face>&,               \
                                                        const CameraPose&, const RenderConfig&, const std::vector<int>&);

S3D_INSTANTIATE_RENDER(float)
S3D_INSTANTIATE_RENDER(double)

}  // namespace s3d
