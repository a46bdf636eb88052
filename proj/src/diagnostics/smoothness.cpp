#include "diagnostics/smoothness.hpp"

#include <algorithm>
#include <cmath>

#include "tensor/ops.hpp"

namespace s3d {

double kink_bound(const TensorD& base, const TensorD& moved, double step_length, const std::vector<Face>& faces,
                  const RenderConfig& cfg) {
  const int res = cfg.resolution;
  struct Hit {
    int edge;
    double d2, t, qx, qy;
  };
  auto closest = [](double px, double py, const double (&x)[3], const double (&y)[3]) {
    Hit best{0, 1e300, 0, 0, 0};
    for (int e = 0; e < 3; ++e) {
      const double ax = x[e], ay = y[e], bx = x[(e + 1) % 3], by = y[(e + 1) % 3];
      const double ex = bx - ax, ey = by - ay, len = ex * ex + ey * ey;
      const double t = len > 0 ? std::clamp(((px - ax) * ex + (py - ay) * ey) / len, 0.0, 1.0) : 0.0;
      const double qx = ax + t * ex, qy = ay + t * ey;
      const double d = (qx - px) * (qx - px) + (qy - py) * (qy - py);
      if (d < best.d2) best = {e, d, t, qx, qy};
    }
    return best;
  };
  // Directional derivative of d^2 along the vertex velocity for one edge.
  auto directional = [](double px, double py, const Hit& h, const double (&vx)[3], const double (&vy)[3]) {
    const int a = h.edge, b = (h.edge + 1) % 3;
    const double rx = -2.0 * (px - h.qx), ry = -2.0 * (py - h.qy);
    return rx * ((1 - h.t) * vx[a] + h.t * vx[b]) + ry * ((1 - h.t) * vy[a] + h.t * vy[b]);
  };
  double total = 0;
  for (const Face& f : faces) {
    double xa[3], ya[3], xb[3], yb[3], vx[3], vy[3];
    for (int k = 0; k < 3; ++k) {
      const auto r = static_cast<std::size_t>(f[static_cast<std::size_t>(k)]) * 3;
      xa[k] = base.at(r);
      ya[k] = base.at(r + 1);
      xb[k] = moved.at(r);
      yb[k] = moved.at(r + 1);
      vx[k] = (xb[k] - xa[k]) / step_length;
      vy[k] = (yb[k] - ya[k]) / step_length;
    }
    for (int j = 0; j < res; ++j) {
      for (int i = 0; i < res; ++i) {
        const double px = 2.0 * (i + 0.5) / res - 1, py = 1 - 2.0 * (j + 0.5) / res;
        const Hit ha = closest(px, py, xa, ya), hb = closest(px, py, xb, yb);
        if (ha.edge == hb.edge) continue;
        // Evaluate both edges' derivatives at the base configuration.
        Hit other = ha;
        {
          const int e = hb.edge;
          const double ax = xa[e], ay = ya[e], bx = xa[(e + 1) % 3], by = ya[(e + 1) % 3];
          const double ex = bx - ax, ey = by - ay, len = ex * ex + ey * ey;
          other.edge = e;
          other.t = len > 0 ? std::clamp(((px - ax) * ex + (py - ay) * ey) / len, 0.0, 1.0) : 0.0;
          other.qx = ax + other.t * ex;
          other.qy = ay + other.t * ey;
        }
        const double jump = std::abs(directional(px, py, ha, vx, vy) - directional(px, py, other, vx, vy));
        const double a = std::min(ha.d2, hb.d2) / cfg.sigma;
        const double slope = std::exp(-a) / ((1 + std::exp(-a)) * (1 + std::exp(-a)));
        total += slope / cfg.sigma * jump;
      }
    }
  }
  return total;
}

double worst_stencil_kink(const TensorD& vertices, const std::vector<Face>& faces, const CameraPose& pose,
                          const RenderConfig& cfg, double eps) {
  NoGradGuard guard;
  const TensorD base = project_ndc(vertices, pose, cfg);
  double worst = 0;
  for (std::size_t k = 0; k < vertices.numel(); ++k) {
    for (double s : {-eps, eps}) {
      std::vector<double> v(vertices.values().begin(), vertices.values().end());
      v[k] += s;
      const TensorD moved = project_ndc(TensorD::from(vertices.shape(), std::move(v)), pose, cfg);
      worst = std::max(worst, kink_bound(base, moved, eps, faces, cfg));
    }
  }
  return worst;
}

std::vector<bool> activation_pattern(const std::function<void()>& forward) {
  NoGradGuard no_grad;
  ActivationPatternRecorder rec;
  forward();
  return rec.pattern();
}

std::vector<std::size_t> rectifier_smooth_coordinates(std::span<double> values, const std::function<void()>& forward,
                                                      double eps, const std::vector<std::size_t>& candidates) {
  const auto base = activation_pattern(forward);
  std::vector<std::size_t> out;
  for (std::size_t i : candidates) {
    const double saved = values[i];
    values[i] = saved + eps;
    const bool plus = activation_pattern(forward) == base;
    values[i] = saved - eps;
    const bool minus = activation_pattern(forward) == base;
    values[i] = saved;
    if (plus && minus) out.push_back(i);
  }
  return out;
}

}  // namespace s3d
