#pragma once

#include <cstdint>
#include <vector>

#include "tensor/tensor.hpp"

// Differentiable primitives. Every op validates its shape rule and throws
// InvalidArgument naming the op and the offending shapes.
namespace s3d {

// Element-wise binary ops with numpy-style broadcasting.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> neg(const Tensor<T>& x);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T offset);

template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> sqrt(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope);

/// While alive, appends the sign (input > 0) of every relu and leaky_relu
/// input evaluated on this thread. Two evaluations with equal patterns lie
/// on the same linear piece of every rectifier.
class ActivationPatternRecorder {
 public:
  ActivationPatternRecorder();
  ~ActivationPatternRecorder();
  ActivationPatternRecorder(const ActivationPatternRecorder&) = delete;
  ActivationPatternRecorder& operator=(const ActivationPatternRecorder&) = delete;

  const std::vector<bool>& pattern() const { return pattern_; }

 private:
  std::vector<bool> pattern_;
  ActivationPatternRecorder* previous_;
};

/// log(1 + exp(x)) without overflow.
template <typename T> Tensor<T> softplus(const Tensor<T>& x);

/// Softmax along `axis`, max-subtracted.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
/// Sums out `axis`; keepdim leaves a size-1 axis in place.
template <typename T> Tensor<T> sum_axis(const Tensor<T>& x, std::size_t axis, bool keepdim = false);
template <typename T> Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis, bool keepdim = false);

template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// Swaps the last two axes (2-D or batched 3-D).
template <typename T> Tensor<T> transpose(const Tensor<T>& x);

/// [m,k]x[k,n] -> [m,n], or batched [b,m,k]x[b,k,n] -> [b,m,n].
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x[b,in] * w[out,in]^T + bias[out]; bias may be undefined.
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// x[n,c,h,w], w[o,c,kh,kw], bias[o] (may be undefined) -> [n,o,ho,wo].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Conv2dParams params);

/// Nearest-neighbour x2 upsampling of the two trailing axes of [n,c,h,w].
template <typename T> Tensor<T> upsample_nearest2x(const Tensor<T>& x);

/// Rows of x[n,...] picked by index.
template <typename T> Tensor<T> gather_rows(const Tensor<T>& x, const std::vector<std::int32_t>& index);
/// Stacks equally-shaped tensors along a new leading axis.
template <typename T> Tensor<T> stack(const std::vector<Tensor<T>>& parts);
/// x[i] along the leading axis.
template <typename T> Tensor<T> select(const Tensor<T>& x, std::size_t index);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T> Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }

}  // namespace s3d
