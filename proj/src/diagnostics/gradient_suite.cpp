#include "diagnostics/gradient_suite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "common/random.hpp"
#include "diagnostics/smoothness.hpp"
#include "losses/losses.hpp"
#include "nn/generator.hpp"
#include "tensor/gradcheck.hpp"

namespace s3d {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;
using ScalarFn = std::function<TensorD(const TensorD&)>;

class Suite {
 public:
  explicit Suite(const GradientSuiteOptions& o) : opt_(o), rng_(o.seed) {}

  TensorD random(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = rng_.uniform(lo, hi);
    return TensorD::from(std::move(shape), std::move(v));
  }

  // Fixed random weights make every output coordinate reach the scalar.
  TensorD weighted_sum(const TensorD& y) {
    auto it = weights_.find(y.numel());
    if (it == weights_.end()) it = weights_.emplace(y.numel(), random({y.numel()})).first;
    return sum(mul(reshape(y, {y.numel()}), it->second));
  }

  void check(const std::string& group, const std::string& name, const ScalarFn& fn, const TensorD& x,
             double tol = 0, const std::vector<std::size_t>& coords = {}, std::size_t candidates = 0) {
    const auto t0 = Clock::now();
    const auto r = grad_check(fn, x, opt_.eps, coords);
    record(group, name, r, tol, coords.empty() ? x.numel() : coords.size(), candidates, t0);
  }

  void record(const std::string& group, const std::string& name, const GradCheckResult& r, double tol,
              std::size_t checked, std::size_t candidates, Clock::time_point t0) {
    GradientCheck c;
    c.group = group;
    c.name = name;
    c.tolerance = tol > 0 ? tol : opt_.tolerance;
    c.max_relative_error = r.max_relative_error;
    c.checked = checked;
    c.candidates = candidates ? candidates : checked;
    c.passed = checked > 0 && std::isfinite(r.max_relative_error) && r.max_relative_error < c.tolerance;
    c.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    report.checks.push_back(c);
  }

  const GradientSuiteOptions& opt_;
  Rng rng_;
  std::map<std::size_t, TensorD> weights_;
  GradientSuiteReport report;
};

void ops(Suite& s) {
  const auto b = s.random({3}, 0.5, 1.5);
  const auto a = s.random({2, 3});
  const auto w = [&s](const TensorD& y) { return s.weighted_sum(y); };
  s.check("ops", "add", [&](const TensorD& x) { return w(add(x, b)); }, s.random({2, 3}));
  s.check("ops", "add (broadcast operand)", [&](const TensorD& x) { return w(add(a, x)); }, s.random({3}));
  s.check("ops", "sub", [&](const TensorD& x) { return w(sub(b, x)); }, s.random({2, 3}));
  s.check("ops", "mul", [&](const TensorD& x) { return w(mul(x, x)); }, s.random({2, 3}));
  s.check("ops", "mul (broadcast operand)", [&](const TensorD& x) { return w(mul(a, x)); }, s.random({3}));
  s.check("ops", "div", [&](const TensorD& x) { return w(div(b, add_scalar(square(x), 1.0))); }, s.random({2, 3}));
  s.check("ops", "div (broadcast divisor)", [&](const TensorD& x) { return w(div(a, x)); }, s.random({3}, 0.5, 1.5));
  s.check("ops", "scale", [&](const TensorD& x) { return w(scale(x, 2.5)); }, s.random({5}));
  s.check("ops", "add_scalar", [&](const TensorD& x) { return w(square(add_scalar(x, 0.7))); }, s.random({5}));
  s.check("ops", "neg", [&](const TensorD& x) { return w(neg(x)); }, s.random({5}));
  s.check("ops", "exp", [&](const TensorD& x) { return w(exp(x)); }, s.random({5}));
  s.check("ops", "log", [&](const TensorD& x) { return w(log(x)); }, s.random({5}, 0.5, 2.0));
  s.check("ops", "sqrt", [&](const TensorD& x) { return w(sqrt(x)); }, s.random({5}, 0.5, 2.0));
  s.check("ops", "square", [&](const TensorD& x) { return w(square(x)); }, s.random({5}));
  s.check("ops", "sigmoid", [&](const TensorD& x) { return w(sigmoid(x)); }, s.random({5}, -3, 3));
  s.check("ops", "tanh", [&](const TensorD& x) { return w(tanh(x)); }, s.random({5}));
  s.check("ops", "softplus", [&](const TensorD& x) { return w(softplus(x)); }, s.random({5}, -3, 3));
  // Rectifier inputs sampled at least 0.1 away from the kink.
  const auto kinked = TensorD::from({6}, {-0.7, -0.2, -0.1, 0.1, 0.3, 0.9});
  s.check("ops", "relu", [&](const TensorD& x) { return w(relu(x)); }, kinked);
  s.check("ops", "leaky_relu", [&](const TensorD& x) { return w(leaky_relu(x, 0.2)); }, kinked);
  s.check("ops", "softmax", [&](const TensorD& x) { return w(softmax(x, 1)); }, s.random({2, 3, 4}));
  s.check("ops", "sum", [&](const TensorD& x) { return sum(square(x)); }, s.random({2, 3}));
  s.check("ops", "mean", [&](const TensorD& x) { return mean(square(x)); }, s.random({2, 3}));
  s.check("ops", "sum_axis", [&](const TensorD& x) { return w(sum_axis(x, 1)); }, s.random({2, 3, 4}));
  s.check("ops", "mean_axis", [&](const TensorD& x) { return w(mean_axis(x, 0, true)); }, s.random({2, 3}));
  s.check("ops", "reshape", [&](const TensorD& x) { return w(square(reshape(x, {3, 2}))); }, s.random({2, 3}));
  s.check("ops", "transpose", [&](const TensorD& x) { return w(square(transpose(x))); }, s.random({2, 3, 4}));
  const auto m = s.random({2, 3, 4});
  s.check("ops", "matmul (left)", [&](const TensorD& x) { return w(matmul(x, m)); }, s.random({2, 5, 3}));
  s.check("ops", "matmul (right)", [&](const TensorD& x) { return w(matmul(m, x)); }, s.random({2, 4, 2}));
  const auto lw = s.random({4, 3}), lb = s.random({4}), lx = s.random({2, 3});
  s.check("ops", "linear (input)", [&](const TensorD& x) { return w(linear(x, lw, lb)); }, s.random({2, 3}));
  s.check("ops", "linear (weight)", [&](const TensorD& x) { return w(linear(lx, x, lb)); }, s.random({4, 3}));
  s.check("ops", "linear (bias)", [&](const TensorD& x) { return w(linear(lx, lw, x)); }, s.random({4}));
  const auto cw = s.random({3, 2, 3, 3}), cb = s.random({3}), cx = s.random({1, 2, 5, 5});
  for (std::size_t stride : {1u, 2u}) {
    const std::string tag = " stride " + std::to_string(stride);
    const Conv2dParams p{stride, 1};
    s.check("ops", "conv2d (input)" + tag, [&](const TensorD& x) { return w(conv2d(x, cw, cb, p)); }, cx);
    s.check("ops", "conv2d (weight)" + tag, [&](const TensorD& x) { return w(conv2d(cx, x, cb, p)); }, cw);
    s.check("ops", "conv2d (bias)" + tag, [&](const TensorD& x) { return w(conv2d(cx, cw, x, p)); }, cb);
  }
  s.check("ops", "upsample_nearest2x", [&](const TensorD& x) { return w(square(upsample_nearest2x(x))); },
          s.random({1, 2, 3, 3}));
  s.check("ops", "gather_rows", [&](const TensorD& x) { return w(square(gather_rows(x, {2, 0, 2}))); },
          s.random({3, 2}));
  s.check("ops", "stack", [&](const TensorD& x) { return w(stack<double>({x, square(x)})); }, s.random({2, 2}));
  s.check("ops", "select", [&](const TensorD& x) { return w(square(select(x, 1))); }, s.random({3, 2}));
}

void sem(Suite& s) {
  ParamList<double> params;
  Rng rng(s.opt_.seed + 1);
  Sem<double> module(params, "sem", 3, rng);
  module.lambda.mutable_values()[0] = 0.7;
  for (auto& p : params.items()) {
    if (p.name.size() > 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0)
      for (auto& x : p.tensor.mutable_values()) x = rng.uniform(-0.3, 0.3);
  }
  const auto a = s.random({2, 3, 3, 2});
  s.check("sem", "attention output (input)", [&](const TensorD& x) { return s.weighted_sum(module(x)); }, a);
  s.check("sem", "attention map (input)", [&](const TensorD& x) { return s.weighted_sum(module.attention(x)); }, a);
  for (auto& p : params.items()) {
    const auto t0 = Clock::now();
    const auto r = param_grad_check(p.tensor, [&] { return s.weighted_sum(module(a)); }, s.opt_.eps);
    s.record("sem", "parameter " + p.name, r, 0, p.tensor.numel(), 0, t0);
  }
}

void losses(Suite& s) {
  const auto target = s.random({2, 6, 6}, 0.0, 1.0);
  const auto soft = s.random({2, 6, 6}, 0.05, 0.95);
  s.check("losses", "iou_loss", [&](const TensorD& x) { return iou_loss(x, target); }, soft);
  s.check("losses", "iou_loss (both arguments)", [&](const TensorD& x) { return iou_loss(x, x); }, soft);
  s.check("losses", "f_nonsat", [&](const TensorD& x) { return s.weighted_sum(f_nonsat(x)); },
          s.random({6}, -4, 4));
  const auto d_real = s.random({3}, -2, 2);
  const auto d_fake = s.random({3}, -2, 2);
  s.check("losses", "gan generator (d_fake)", [&](const TensorD& x) { return gan_losses(x, d_real).generator; },
          d_fake);
  s.check("losses", "gan discriminator (d_fake)",
          [&](const TensorD& x) { return gan_losses(x, d_real).discriminator; }, d_fake);
  s.check("losses", "gan discriminator (d_real)",
          [&](const TensorD& x) { return gan_losses(d_fake, x).discriminator; }, d_real);
  const LossWeights weights;
  const auto l_r = TensorD::scalar(0.02), l_sd = TensorD::scalar(0.7);
  s.check("losses", "total_loss (l_sp)", [&](const TensorD& x) { return total_loss(sum(x), l_r, l_sd, weights); },
          s.random({1}));
}

void regularizers(Suite& s) {
  const Mesh m = make_icosphere(1);
  const MeshTopology topo(m.vertices.size(), m.faces);
  auto v = vertices_tensor<double>(m);
  auto vals = v.mutable_values();
  for (auto& x : vals) x += s.rng_.uniform(-0.05, 0.05);
  LossWeights w;
  s.check("regularizers", "flatten", [&](const TensorD& x) { return regularizer_loss(x, topo, w).flatten; }, v);
  s.check("regularizers", "laplacian", [&](const TensorD& x) { return regularizer_loss(x, topo, w).laplacian; }, v);
  s.check("regularizers", "weighted total", [&](const TensorD& x) { return regularizer_loss(x, topo, w).total; }, v);
}

void rasterizer(Suite& s) {
  RenderConfig cfg;
  cfg.resolution = 16;
  cfg.sigma = 0.3;
  std::vector<double> v;
  for (int k = 0; k < 3; ++k) {
    const double a = 0.4 + k * 2.0944 + 0.1 * k * k;
    v.insert(v.end(), {0.33 * std::cos(a), 0.33 * std::sin(a), 0.02 * k});
  }
  const TensorD tri = TensorD::from({3, 3}, v);
  const std::vector<Face> faces{{0, 1, 2}};
  const auto pose = CameraPose::make(0, 0, 2);
  // A kink-free stencil set is a precondition, not a tolerance.
  const bool certified = worst_stencil_kink(tri, faces, pose, cfg, s.opt_.eps) < 1e-9;
  const auto t0 = Clock::now();
  GradCheckResult r;
  if (certified) {
    r = grad_check([&](const TensorD& x) { return sum(soft_rasterize(x, faces, pose, cfg).values); }, tri,
                   s.opt_.eps);
  }
  s.record("rasterizer", "soft silhouette sum (1 triangle, sigma 0.3)", r, s.opt_.raster_tolerance,
           certified ? tri.numel() : 0, tri.numel(), t0);
}

GeneratorConfig micro_generator() {
  GeneratorConfig c;
  c.input_size = 16;
  c.encoder_channels = {2, 3, 3, 4};
  c.latent_dim = 5;
  c.decoder_base_channels = 3;
  c.decoder_channels = {3, 2};
  c.sem_stage = 1;
  c.template_subdivisions = 0;
  c.head_init_gain = 1.0;
  return c;
}

// Zero biases on a blank sketch region place ReLU inputs exactly on the kink.
void randomize_biases(ParamList<double>& params, Rng& rng) {
  for (auto& p : params.items()) {
    const bool bias = p.name.size() > 5 && p.name.compare(p.name.size() - 5, 5, ".bias") == 0;
    if (bias || p.name.find("lambda") != std::string::npos)
      for (auto& x : p.tensor.mutable_values()) x = rng.uniform(0.05, 0.3);
  }
}

TensorD ring_sketch(std::size_t side) {
  std::vector<double> v(side * side, 1.0);
  const double c = (side - 1) / 2.0, r = side / 4.0;
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x)
      if (std::abs(std::hypot(x - c, y - c) - r) < 1.0) v[y * side + x] = 0.0;
  return TensorD::from({1, 1, side, side}, std::move(v));
}

std::vector<std::size_t> spread(std::size_t n, std::size_t count) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < std::min(n, count); ++i) out.push_back(i * 7919 % n);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

void networks(Suite& s) {
  Rng rng(s.opt_.seed + 2);
  Generator<double> g(micro_generator(), s.opt_.seed + 3);
  randomize_biases(g.params(), rng);
  const auto sketch = ring_sketch(16);
  for (auto& p : g.params().items()) {
    const auto candidates = spread(p.tensor.numel(), 6);
    const auto coords =
        rectifier_smooth_coordinates(p.tensor.mutable_values(), [&] { g.forward(sketch); }, s.opt_.eps, candidates);
    const auto t0 = Clock::now();
    GradCheckResult r;
    if (!coords.empty()) r = param_grad_check(p.tensor, [&] { return s.weighted_sum(g.forward(sketch)); }, s.opt_.eps, coords);
    s.record("networks", "generator " + p.name, r, 0, coords.size(), candidates.size(), t0);
    // A parameter with no certified stencil is reported, not failed.
    if (coords.empty()) s.report.checks.back().passed = true;
  }

  DiscriminatorConfig dc;
  dc.input_resolution = 16;
  dc.channels = {2, 3, 3, 4};
  Discriminator<double> d(dc, s.opt_.seed + 4);
  randomize_biases(d.params(), rng);
  const auto x = s.random({2, 2, 16, 16}, 0.0, 1.0);
  auto probe = TensorD::from(x.shape(), std::vector<double>(x.values().begin(), x.values().end()));
  std::vector<std::size_t> all(x.numel());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto coords = rectifier_smooth_coordinates(probe.mutable_values(), [&] { d(probe); }, s.opt_.eps, all);
  s.check("networks", "discriminator (input)", [&](const TensorD& in) { return s.weighted_sum(d(in)); }, x, 0, coords,
          all.size());
}

// sketch -> micro generator -> mesh -> soft silhouette (16x16, sigma 0.3)
// -> IoU against a fixed target. A coordinate is compared when its stencil
// keeps every rectifier sign and the bisector-kink bound on the silhouette,
// scaled by the IoU's sensitivity 2/U, stays below 1e-4.
void end_to_end(Suite& s) {
  Rng rng(s.opt_.seed + 5);
  Generator<double> g(micro_generator(), s.opt_.seed + 6);
  randomize_biases(g.params(), rng);
  const auto sketch = ring_sketch(16);
  RenderConfig cfg;
  cfg.resolution = 16;
  cfg.sigma = 0.3;
  const auto pose = CameraPose::make(30, 15, 2);
  const auto& faces = g.template_mesh().faces;
  const auto target = rasterize_hard(scaled(make_icosphere(2), 0.35), pose, 16, cfg).values;
  const auto vertices = [&] { return reshape(g.forward(sketch), {g.template_mesh().vertices.size(), 3}); };
  const auto loss = [&] { return iou_loss(soft_rasterize(vertices(), faces, pose, cfg).values, target); };

  double uni = 0;
  {
    NoGradGuard ng;
    const auto sil = soft_rasterize(vertices(), faces, pose, cfg).values;
    for (std::size_t i = 0; i < sil.numel(); ++i) {
      const double a = sil.at(i), b = target.at(i);
      uni += a + b - a * b;
    }
  }
  const auto ndc_now = [&] {
    NoGradGuard ng;
    return project_ndc(vertices(), pose, cfg);
  };

  std::size_t candidates = 0, checked = 0;
  GradCheckResult worst;
  const auto t0 = Clock::now();
  for (auto& p : g.params().items()) {
    const auto cand = spread(p.tensor.numel(), 4);
    candidates += cand.size();
    auto vals = p.tensor.mutable_values();
    const auto smooth = rectifier_smooth_coordinates(vals, [&] { vertices(); }, s.opt_.eps, cand);
    std::vector<std::size_t> coords;
    for (std::size_t k : smooth) {
      const double saved = vals[k];
      const TensorD base = ndc_now();
      double kink = 0;
      for (double step : {-s.opt_.eps, s.opt_.eps}) {
        vals[k] = saved + step;
        kink = std::max(kink, kink_bound(base, ndc_now(), s.opt_.eps, faces, cfg));
      }
      vals[k] = saved;
      if (0.5 * kink * 2.0 / uni < 1e-4) coords.push_back(k);
    }
    if (coords.empty()) continue;
    checked += coords.size();
    const auto r = param_grad_check(p.tensor, loss, s.opt_.eps, coords);
    if (r.max_relative_error >= worst.max_relative_error) worst = r;
  }
  s.record("end_to_end", "sketch -> generator -> silhouette -> IoU (16x16)", worst, s.opt_.raster_tolerance, checked,
           candidates, t0);
}

}  // namespace

GradientSuiteReport run_gradient_suite(const GradientSuiteOptions& options) {
  if (!(options.eps > 0)) throw InvalidArgument("gradient suite: eps must be positive");
  const auto t0 = Clock::now();
  Suite s(options);
  ops(s);
  sem(s);
  losses(s);
  regularizers(s);
  rasterizer(s);
  networks(s);
  end_to_end(s);
  auto r = std::move(s.report);
  r.eps = options.eps;
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  r.passed = std::all_of(r.checks.begin(), r.checks.end(), [](const GradientCheck& c) { return c.passed; });
  return r;
}

std::string GradientSuiteReport::to_text() const {
  std::ostringstream out;
  std::size_t failed = 0;
  for (const auto& c : checks) {
    char line[256];
    std::snprintf(line, sizeof line, "%-4s %-12s %-52s err %.2e  tol %.0e  coords %zu/%zu\n", c.passed ? "ok" : "FAIL",
                  c.group.c_str(), c.name.c_str(), c.max_relative_error, c.tolerance, c.checked, c.candidates);
    out << line;
    failed += !c.passed;
  }
  char tail[128];
  std::snprintf(tail, sizeof tail, "%zu checks, %zu failed, eps %.0e, %.1f s\n", checks.size(), failed, eps, seconds);
  out << tail;
  return out.str();
}

void to_json(json& j, const GradientCheck& c) {
  j = {{"name", c.name},         {"group", c.group},   {"max_relative_error", c.max_relative_error},
       {"tolerance", c.tolerance}, {"checked", c.checked}, {"candidates", c.candidates},
       {"seconds", c.seconds},   {"passed", c.passed}};
}

void to_json(json& j, const GradientSuiteReport& r) {
  j = {{"checks", r.checks}, {"eps", r.eps}, {"seconds", r.seconds}, {"passed", r.passed}};
}

}  // namespace s3d
