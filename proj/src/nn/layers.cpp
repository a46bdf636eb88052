#include "nn/layers.hpp"

#include <cmath>

namespace s3d {

template <typename T>
Tensor<T> ParamList<T>::add(const std::string& name, Shape shape, Rng& rng, double bound) {
  if (find(name)) throw InvalidArgument("parameter '" + name + "' registered twice");
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = bound > 0 ? static_cast<T>(rng.uniform(-bound, bound)) : T{0};
  auto t = Tensor<T>::from(std::move(shape), std::move(v), true);
  items_.push_back({name, t});
  return t;
}

template <typename T>
Tensor<T> ParamList<T>::add_constant(const std::string& name, Shape shape, T value) {
  if (find(name)) throw InvalidArgument("parameter '" + name + "' registered twice");
  auto t = Tensor<T>::full(std::move(shape), value, true);
  items_.push_back({name, t});
  return t;
}

template <typename T>
const Tensor<T>* ParamList<T>::find(const std::string& name) const {
  for (const auto& p : items_) {
    if (p.name == name) return &p.tensor;
  }
  return nullptr;
}

template <typename T>
std::size_t ParamList<T>::total_size() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.numel();
  return n;
}

template <typename T>
void ParamList<T>::zero_grad() {
  for (auto& p : items_) p.tensor.zero_grad();
}

template <typename T>
Conv2dLayer<T> make_conv(ParamList<T>& params, const std::string& name, std::size_t in, std::size_t out,
                         std::size_t kernel, std::size_t stride, std::size_t padding, Rng& rng, double gain) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(in * kernel * kernel));
  Conv2dLayer<T> layer;
  layer.weight = params.add(name + ".weight", {out, in, kernel, kernel}, rng, bound);
  layer.bias = params.add(name + ".bias", {out}, rng, 0.0);
  layer.params = {stride, padding};
  return layer;
}

template <typename T>
LinearLayer<T> make_linear(ParamList<T>& params, const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                           double gain) {
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(in));
  LinearLayer<T> layer;
  layer.weight = params.add(name + ".weight", {out, in}, rng, bound);
  layer.bias = params.add(name + ".bias", {out}, rng, 0.0);
  return layer;
}

#define S3D_INSTANTIATE_LAYERS(T)                                                                                  \
  template class ParamList<T>;                                                                                     \
  template Conv2dLayer<T> make_conv(ParamList<T>&, const std::string&, std::size_t, std::size_t, std::size_t,      \
                                    std::size_t, std::size_t, Rng&, double);                                       \
  template LinearLayer<T> make_linear(ParamList<T>&, const std::string&, std::size_t, std::size_t, Rng&, double);

S3D_INSTANTIATE_LAYERS(float)
S3D_INSTANTIATE_LAYERS(double)

}  // namespace s3d
