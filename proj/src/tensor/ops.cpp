#include "tensor/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace s3d {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b, const std::string& why) {
  throw InvalidArgument(std::string(op) + ": " + why + " (got " + shape_str(a) + " and " + shape_str(b) + ")");
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const std::string& why) {
  throw InvalidArgument(std::string(op) + ": " + why + " (got " + shape_str(a) + ")");
}

// Maps every output element of a broadcast binary op to the flat index it
// reads in each operand.
struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

BroadcastPlan plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + (rank - b.size()));
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) shape_fail(op, a, b, "shapes are not broadcastable");
    plan.out[i] = std::max(pa[i], pb[i]);
  }
  std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
  std::size_t ra = 1, rb = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : ra;
    sb[i] = pb[i] == 1 ? 0 : rb;
    ra *= pa[i];
    rb *= pb[i];
  }
  const std::size_t n = shape_numel(plan.out);
  plan.a_index.resize(n);
  plan.b_index.resize(n);
  std::vector<std::size_t> counter(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t k = 0; k < n; ++k) {
    plan.a_index[k] = ia;
    plan.b_index[k] = ib;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      ia += sa[d];
      ib += sb[d];
      if (counter[d] < plan.out[d]) break;
      ia -= sa[d] * counter[d];
      ib -= sb[d] * counter[d];
      counter[d] = 0;
    }
  }
  return plan;
}

// fa(a, b) -> value; ga(a, b) -> d/da; gb(a, b) -> d/db.
template <typename T, typename F, typename GA, typename GB>
Tensor<T> binary_op(const char* op, const Tensor<T>& a, const Tensor<T>& b, F f, GA ga, GB gb) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(op, a.shape(), b.shape()));
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t n = shape_numel(plan->out);
  std::vector<T> out(n);
  if (plan->same) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(av[plan->a_index[i]], bv[plan->b_index[i]]);
  }
  return make_op_result<T>(op, plan->out, std::move(out), {a, b}, [plan, ga, gb](TensorNode<T>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    const auto& g = self.grad;
    const std::size_t n = g.size();
    if (na.requires_grad) {
      auto& da = na.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = plan->same ? i : plan->a_index[i];
        const std::size_t ib = plan->same ? i : plan->b_index[i];
        da[ia] += g[i] * ga(na.value[ia], nb.value[ib]);
      }
    }
    if (nb.requires_grad) {
      auto& db = nb.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t ia = plan->same ? i : plan->a_index[i];
        const std::size_t ib = plan->same ? i : plan->b_index[i];
        db[ib] += g[i] * gb(na.value[ia], nb.value[ib]);
      }
    }
  });
}

// f(x) -> y; df(x, y) -> dy/dx.
template <typename T, typename F, typename DF>
Tensor<T> unary_op(const char* op, const Tensor<T>& x, F f, DF df) {
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  return make_op_result<T>(op, x.shape(), std::move(out), {x}, [df](TensorNode<T>& self) {
    auto& nx = *self.inputs[0];
    auto& dx = nx.ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i] * df(nx.value[i], self.value[i]);
  });
}

template <typename T>
T stable_softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

// Splits a shape around `axis` into outer * len * inner.
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) shape_fail(op, s, "axis " + std::to_string(axis) + " out of range");
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

template <typename T>
void im2col(const T* x, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, T* col) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        T* row = col + ((ci * kh + ky) * kw + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = x + (ci * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t c, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
                std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, T* x) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const T* row = col + ((ci * kh + ky) * kw + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          T* dst = x + (ci * h + static_cast<std::size_t>(iy)) * w;
          const T* src = row + oy * wo;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>("add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
                      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>("sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
                      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>("mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
                      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary_op<T>("div", a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
                      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return unary_op<T>("neg", x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary_op<T>("scale", x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T offset) {
  return unary_op<T>("add_scalar", x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary_op<T>("exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  for (T v : x.values()) {
    if (!(v > T(0))) throw InvalidArgument("log: input must be strictly positive");
  }
  return unary_op<T>("log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  for (T v : x.values()) {
    if (v < T(0)) throw InvalidArgument("sqrt: input must be non-negative");
  }
  return unary_op<T>("sqrt", x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary_op<T>("square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary_op<T>("sigmoid", x, [](T v) { return stable_sigmoid(v); },
                     [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary_op<T>("tanh", x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

namespace {
thread_local std::vector<bool>* g_pattern_sink = nullptr;
thread_local ActivationPatternRecorder* g_active_recorder = nullptr;

template <typename T>
void record_signs(const Tensor<T>& x) {
  if (!g_pattern_sink) return;
  for (T v : x.values()) g_pattern_sink->push_back(v > T(0));
}
}  // namespace

ActivationPatternRecorder::ActivationPatternRecorder() : previous_(g_active_recorder) {
  g_active_recorder = this;
  g_pattern_sink = &pattern_;
}

ActivationPatternRecorder::~ActivationPatternRecorder() {
  g_active_recorder = previous_;
  g_pattern_sink = previous_ ? &previous_->pattern_ : nullptr;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  record_signs(x);
  return unary_op<T>("relu", x, [](T v) { return v > T(0) ? v : T(0); },
                     [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  record_signs(x);
  return unary_op<T>("leaky_relu", x, [slope](T v) { return v > T(0) ? v : slope * v; },
                     [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary_op<T>("softplus", x, [](T v) { return stable_softplus(v); },
                     [](T v, T) { return stable_sigmoid(v); });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const AxisView v = axis_view("softmax", x.shape(), axis);
  if (v.len == 0) shape_fail("softmax", x.shape(), "empty softmax axis");
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.len * v.inner + i;
      T m = -std::numeric_limits<T>::infinity();
      for (std::size_t k = 0; k < v.len; ++k) m = std::max(m, xv[base + k * v.inner]);
      T z = 0;
      for (std::size_t k = 0; k < v.len; ++k) {
        const T e = std::exp(xv[base + k * v.inner] - m);
        out[base + k * v.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < v.len; ++k) out[base + k * v.inner] /= z;
    }
  }
  return make_op_result<T>("softmax", x.shape(), std::move(out), {x}, [v](TensorNode<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t i = 0; i < v.inner; ++i) {
        const std::size_t base = o * v.len * v.inner + i;
        T dot = 0;
        for (std::size_t k = 0; k < v.len; ++k) dot += g[base + k * v.inner] * y[base + k * v.inner];
        for (std::size_t k = 0; k < v.len; ++k) {
          const std::size_t idx = base + k * v.inner;
          dx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.values()) total += v;
  return make_op_result<T>("sum", {}, {total}, {x}, [](TensorNode<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    const T g = self.grad[0];
    for (auto& d : dx) d += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const std::size_t n = x.numel();
  if (n == 0) shape_fail("mean", x.shape(), "mean of an empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(n));
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& x, std::size_t axis, bool keepdim) {
  const AxisView v = axis_view("sum_axis", x.shape(), axis);
  Shape out_shape = x.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  const auto xv = x.values();
  std::vector<T> out(v.outer * v.inner, T(0));
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t k = 0; k < v.len; ++k) {
      const T* src = xv.data() + (o * v.len + k) * v.inner;
      T* dst = out.data() + o * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
    }
  }
  return make_op_result<T>("sum_axis", std::move(out_shape), std::move(out), {x}, [v](TensorNode<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    for (std::size_t o = 0; o < v.outer; ++o) {
      for (std::size_t k = 0; k < v.len; ++k) {
        T* dst = dx.data() + (o * v.len + k) * v.inner;
        const T* g = self.grad.data() + o * v.inner;
        for (std::size_t i = 0; i < v.inner; ++i) dst[i] += g[i];
      }
    }
  });
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis, bool keepdim) {
  const std::size_t len = x.size(axis);
  if (len == 0) shape_fail("mean_axis", x.shape(), "mean over an empty axis");
  return scale(sum_axis(x, axis, keepdim), T(1) / static_cast<T>(len));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_fail("reshape", x.shape(), shape, "element count differs");
  std::vector<T> out(x.values().begin(), x.values().end());
  return make_op_result<T>("reshape", std::move(shape), std::move(out), {x}, [](TensorNode<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 2 && s.size() != 3) shape_fail("transpose", s, "expected a 2-D or 3-D tensor");
  const std::size_t batch = s.size() == 3 ? s[0] : 1;
  const std::size_t m = s[s.size() - 2], n = s[s.size() - 1];
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t b = 0; b < batch; ++b) {
    MapM<T>(out.data() + b * m * n, n, m) = MapC<T>(xv.data() + b * m * n, m, n).transpose();
  }
  return make_op_result<T>("transpose", std::move(out_shape), std::move(out), {x},
                           [batch, m, n](TensorNode<T>& self) {
                             auto& dx = self.inputs[0]->ensure_grad();
                             for (std::size_t b = 0; b < batch; ++b) {
                               MapM<T>(dx.data() + b * m * n, m, n) +=
                                   MapC<T>(self.grad.data() + b * m * n, n, m).transpose();
                             }
                           });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  std::size_t batch = 1, m = 0, k = 0, n = 0;
  Shape out_shape;
  if (sa.size() == 2 && sb.size() == 2) {
    m = sa[0];
    k = sa[1];
    n = sb[1];
    if (sb[0] != k) shape_fail("matmul", sa, sb, "inner dimensions differ");
    out_shape = {m, n};
  } else if (sa.size() == 3 && sb.size() == 3) {
    batch = sa[0];
    m = sa[1];
    k = sa[2];
    n = sb[2];
    if (sb[0] != batch) shape_fail("matmul", sa, sb, "batch dimensions differ");
    if (sb[1] != k) shape_fail("matmul", sa, sb, "inner dimensions differ");
    out_shape = {batch, m, n};
  } else {
    shape_fail("matmul", sa, sb, "expected two 2-D or two 3-D tensors");
  }
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    MapM<T>(out.data() + i * m * n, m, n).noalias() =
        MapC<T>(av.data() + i * m * k, m, k) * MapC<T>(bv.data() + i * k * n, k, n);
  }
  return make_op_result<T>("matmul", std::move(out_shape), std::move(out), {a, b},
                           [batch, m, k, n](TensorNode<T>& self) {
                             auto& na = *self.inputs[0];
                             auto& nb = *self.inputs[1];
                             for (std::size_t i = 0; i < batch; ++i) {
                               MapC<T> g(self.grad.data() + i * m * n, m, n);
                               if (na.requires_grad) {
                                 MapM<T>(na.ensure_grad().data() + i * m * k, m, k).noalias() +=
                                     g * MapC<T>(nb.value.data() + i * k * n, k, n).transpose();
                               }
                               if (nb.requires_grad) {
                                 MapM<T>(nb.ensure_grad().data() + i * k * n, k, n).noalias() +=
                                     MapC<T>(na.value.data() + i * m * k, m, k).transpose() * g;
                               }
                             }
                           });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 2 || sw.size() != 2 || sx[1] != sw[1]) shape_fail("linear", sx, sw, "expected x[b,in] and w[out,in]");
  const std::size_t batch = sx[0], in = sx[1], out_dim = sw[0];
  if (bias.defined() && bias.shape() != Shape{out_dim}) shape_fail("linear", sw, bias.shape(), "bias must be [out]");
  std::vector<T> out(batch * out_dim);
  MapM<T> y(out.data(), batch, out_dim);
  y.noalias() = MapC<T>(x.values().data(), batch, in) * MapC<T>(w.values().data(), out_dim, in).transpose();
  if (bias.defined()) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias.values().data(), out_dim);
    y.rowwise() += bv;
  }
  std::vector<Tensor<T>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_op_result<T>("linear", {batch, out_dim}, std::move(out), std::move(inputs),
                           [batch, in, out_dim](TensorNode<T>& self) {
                             MapC<T> g(self.grad.data(), batch, out_dim);
                             auto& nx = *self.inputs[0];
                             auto& nw = *self.inputs[1];
                             if (nx.requires_grad) {
                               MapM<T>(nx.ensure_grad().data(), batch, in).noalias() +=
                                   g * MapC<T>(nw.value.data(), out_dim, in);
                             }
                             if (nw.requires_grad) {
                               MapM<T>(nw.ensure_grad().data(), out_dim, in).noalias() +=
                                   g.transpose() * MapC<T>(nx.value.data(), batch, in);
                             }
                             if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                               auto& db = self.inputs[2]->ensure_grad();
                               Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(db.data(), out_dim) +=
                                   g.colwise().sum();
                             }
                           });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Conv2dParams params) {
  const Shape& sx = x.shape();
  const Shape& sw = w.shape();
  if (sx.size() != 4 || sw.size() != 4) shape_fail("conv2d", sx, sw, "expected x[n,c,h,w] and w[o,c,kh,kw]");
  if (sx[1] != sw[1]) shape_fail("conv2d", sx, sw, "input channels differ");
  if (params.stride == 0) throw InvalidArgument("conv2d: stride must be positive");
  const std::size_t n = sx[0], c = sx[1], h = sx[2], wd = sx[3];
  const std::size_t o = sw[0], kh = sw[2], kw = sw[3];
  const std::size_t stride = params.stride, pad = params.padding;
  if (h + 2 * pad < kh || wd + 2 * pad < kw) shape_fail("conv2d", sx, sw, "kernel larger than padded input");
  if (bias.defined() && bias.shape() != Shape{o}) shape_fail("conv2d", sw, bias.shape(), "bias must be [o]");
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - kw) / stride + 1;
  const std::size_t ckk = c * kh * kw, hw = ho * wo;

  std::vector<T> out(n * o * hw);
  std::vector<T> col(ckk * hw);
  MapC<T> wm(w.values().data(), o, ckk);
  for (std::size_t i = 0; i < n; ++i) {
    im2col(x.values().data() + i * c * h * wd, c, h, wd, kh, kw, stride, pad, ho, wo, col.data());
    MapM<T> y(out.data() + i * o * hw, o, hw);
    y.noalias() = wm * MapC<T>(col.data(), ckk, hw);
    if (bias.defined()) {
      for (std::size_t oc = 0; oc < o; ++oc) y.row(oc).array() += bias.values()[oc];
    }
  }
  std::vector<Tensor<T>> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_op_result<T>(
      "conv2d", {n, o, ho, wo}, std::move(out), std::move(inputs),
      [=](TensorNode<T>& self) {
        auto& nx = *self.inputs[0];
        auto& nw = *self.inputs[1];
        const bool has_bias = self.inputs.size() > 2 && self.inputs[2]->requires_grad;
        std::vector<T> col(ckk * hw);
        std::vector<T> dcol(nx.requires_grad ? ckk * hw : 0);
        MapC<T> wm(nw.value.data(), o, ckk);
        for (std::size_t i = 0; i < n; ++i) {
          MapC<T> g(self.grad.data() + i * o * hw, o, hw);
          if (nw.requires_grad) {
            im2col(nx.value.data() + i * c * h * wd, c, h, wd, kh, kw, stride, pad, ho, wo, col.data());
            MapM<T>(nw.ensure_grad().data(), o, ckk).noalias() += g * MapC<T>(col.data(), ckk, hw).transpose();
          }
          if (nx.requires_grad) {
            MapM<T>(dcol.data(), ckk, hw).noalias() = wm.transpose() * g;
            col2im_add(dcol.data(), c, h, wd, kh, kw, stride, pad, ho, wo,
                       nx.ensure_grad().data() + i * c * h * wd);
          }
          if (has_bias) {
            auto& db = self.inputs[2]->ensure_grad();
            for (std::size_t oc = 0; oc < o; ++oc) db[oc] += g.row(oc).sum();
          }
        }
      });
}

template <typename T>
Tensor<T> upsample_nearest2x(const Tensor<T>& x) {
  const Shape& s = x.shape();
  if (s.size() != 4) shape_fail("upsample_nearest2x", s, "expected [n,c,h,w]");
  const std::size_t planes = s[0] * s[1], h = s[2], w = s[3];
  const auto xv = x.values();
  std::vector<T> out(planes * 4 * h * w);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < 2 * h; ++y) {
      for (std::size_t xx = 0; xx < 2 * w; ++xx) {
        out[(p * 2 * h + y) * 2 * w + xx] = xv[(p * h + y / 2) * w + xx / 2];
      }
    }
  }
  return make_op_result<T>("upsample_nearest2x", {s[0], s[1], 2 * h, 2 * w}, std::move(out), {x},
                           [planes, h, w](TensorNode<T>& self) {
                             auto& dx = self.inputs[0]->ensure_grad();
                             for (std::size_t p = 0; p < planes; ++p) {
                               for (std::size_t y = 0; y < 2 * h; ++y) {
                                 for (std::size_t xx = 0; xx < 2 * w; ++xx) {
                                   dx[(p * h + y / 2) * w + xx / 2] += self.grad[(p * 2 * h + y) * 2 * w + xx];
                                 }
                               }
                             }
                           });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::int32_t>& index) {
  const Shape& s = x.shape();
  if (s.empty()) shape_fail("gather_rows", s, "expected at least 1-D input");
  const std::size_t rows = s[0];
  const std::size_t stride = rows ? x.numel() / rows : 0;
  for (auto i : index) {
    if (i < 0 || static_cast<std::size_t>(i) >= rows) {
      throw InvalidArgument("gather_rows: index " + std::to_string(i) + " out of range for " + shape_str(s));
    }
  }
  Shape out_shape = s;
  out_shape[0] = index.size();
  const auto xv = x.values();
  std::vector<T> out(index.size() * stride);
  for (std::size_t r = 0; r < index.size(); ++r) {
    std::copy_n(xv.data() + static_cast<std::size_t>(index[r]) * stride, stride, out.data() + r * stride);
  }
  auto idx = std::make_shared<const std::vector<std::int32_t>>(index);
  return make_op_result<T>("gather_rows", std::move(out_shape), std::move(out), {x}, [idx, stride](TensorNode<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    for (std::size_t r = 0; r < idx->size(); ++r) {
      T* dst = dx.data() + static_cast<std::size_t>((*idx)[r]) * stride;
      const T* g = self.grad.data() + r * stride;
      for (std::size_t j = 0; j < stride; ++j) dst[j] += g[j];
    }
  });
}

template <typename T>
Tensor<T> stack(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw InvalidArgument("stack: no tensors given");
  const Shape& s0 = parts[0].shape();
  for (const auto& p : parts) {
    if (p.shape() != s0) shape_fail("stack", s0, p.shape(), "all parts must share a shape");
  }
  const std::size_t each = shape_numel(s0);
  Shape out_shape{parts.size()};
  out_shape.insert(out_shape.end(), s0.begin(), s0.end());
  std::vector<T> out(parts.size() * each);
  for (std::size_t i = 0; i < parts.size(); ++i) {
    std::copy_n(parts[i].values().data(), each, out.data() + i * each);
  }
  return make_op_result<T>("stack", std::move(out_shape), std::move(out), parts, [each](TensorNode<T>& self) {
    for (std::size_t i = 0; i < self.inputs.size(); ++i) {
      if (!self.inputs[i]->requires_grad) continue;
      auto& dx = self.inputs[i]->ensure_grad();
      for (std::size_t j = 0; j < each; ++j) dx[j] += self.grad[i * each + j];
    }
  });
}

template <typename T>
Tensor<T> select(const Tensor<T>& x, std::size_t index) {
  const Shape& s = x.shape();
  if (s.empty()) shape_fail("select", s, "expected at least 1-D input");
  if (index >= s[0]) shape_fail("select", s, "index " + std::to_string(index) + " out of range");
  const std::size_t each = x.numel() / s[0];
  Shape out_shape(s.begin() + 1, s.end());
  std::vector<T> out(x.values().begin() + static_cast<std::ptrdiff_t>(index * each),
                     x.values().begin() + static_cast<std::ptrdiff_t>((index + 1) * each));
  return make_op_result<T>("select", std::move(out_shape), std::move(out), {x}, [index, each](TensorNode<T>& self) {
    auto& dx = self.inputs[0]->ensure_grad();
    for (std::size_t j = 0; j < each; ++j) dx[index * each + j] += self.grad[j];
  });
}

#define S3D_INSTANTIATE_OPS(T)                                                                  \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> neg(const Tensor<T>&);                                                     \
  template Tensor<T> scale(const Tensor<T>&, T);                                                \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                           \
  template Tensor<T> exp(const Tensor<T>&);                                                     \
  template Tensor<T> log(const Tensor<T>&);                                                     \
  template Tensor<T> sqrt(const Tensor<T>&);                                                    \
  template Tensor<T> square(const Tensor<T>&);                                                  \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                 \
  template Tensor<T> tanh(const Tensor<T>&);                                                    \
  template Tensor<T> relu(const Tensor<T>&);                                                    \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                           \
  template Tensor<T> softplus(const Tensor<T>&);                                                \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                    \
  template Tensor<T> sum(const Tensor<T>&);                                                     \
  template Tensor<T> mean(const Tensor<T>&);                                                    \
  template Tensor<T> sum_axis(const Tensor<T>&, std::size_t, bool);                             \
  template Tensor<T> mean_axis(const Tensor<T>&, std::size_t, bool);                            \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                          \
  template Tensor<T> transpose(const Tensor<T>&);                                               \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dParams); \
  template Tensor<T> upsample_nearest2x(const Tensor<T>&);                                      \
  template Tensor<T> gather_rows(const Tensor<T>&, const std::vector<std::int32_t>&);           \
  template Tensor<T> stack(const std::vector<Tensor<T>>&);                                      \
  template Tensor<T> select(const Tensor<T>&, std::size_t);

S3D_INSTANTIATE_OPS(float)
S3D_INSTANTIATE_OPS(double)

}  // namespace s3d
