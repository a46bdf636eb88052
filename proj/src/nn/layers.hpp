#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common/random.hpp"
#include "tensor/ops.hpp"

namespace s3d {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

/// Ordered, named trainable tensors. Registration order fixes both the
/// initialisation stream and the checkpoint layout.
template <typename T>
class ParamList {
 public:
  /// Uniform(-bound, bound) initialisation; bound 0 gives zeros.
  Tensor<T> add(const std::string& name, Shape shape, Rng& rng, double bound);
  Tensor<T> add_constant(const std::string& name, Shape shape, T value);

  std::vector<NamedParam<T>>& items() { return items_; }
  const std::vector<NamedParam<T>>& items() const { return items_; }
  const Tensor<T>* find(const std::string& name) const;
  std::size_t total_size() const;
  void zero_grad();

 private:
  std::vector<NamedParam<T>> items_;
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> weight, bias;
  Conv2dParams params;

  Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, params); }
};

template <typename T>
struct LinearLayer {
  Tensor<T> weight, bias;

  Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

/// He-uniform weights scaled by `gain`, zero bias.
template <typename T>
Conv2dLayer<T> make_conv(ParamList<T>& params, const std::string& name, std::size_t in, std::size_t out,
                         std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng, double gain = 1.0);

template <typename T>
LinearLayer<T> make_linear(ParamList<T>& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                           double gain = 1.0);

}  // namespace s3d
