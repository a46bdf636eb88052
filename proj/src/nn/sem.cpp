#include "nn/sem.hpp"

#include <algorithm>

namespace s3d {

template <typename T>
Sem<T>::Sem(ParamList<T>& params, const std::string& prefix, std::size_t channels, Rng& rng) : channels_(channels) {
  if (channels == 0) throw InvalidArgument("sem: need at least 1 channel");
  const std::size_t inner = std::max<std::size_t>(1, channels / 2);
  query = make_conv(params, prefix + ".query", channels, inner, 1, 1, 0, rng);
  key = make_conv(params, prefix + ".key", channels, inner, 1, 1, 0, rng);
  value = make_conv(params, prefix + ".value", channels, channels, 1, 1, 0, rng);
  lambda = params.add_constant(prefix + ".lambda", {1}, T{0});
}

template <typename T>
void Sem<T>::check(const Tensor<T>& a) const {
  if (a.dim() != 4 || a.size(1) != channels_) {
    throw InvalidArgument("sem: expected [B," + std::to_string(channels_) + ",N,M], got " + shape_str(a.shape()));
  }
  if (a.size(2) == 0 || a.size(3) == 0) throw InvalidArgument("sem: spatial size must be positive");
}

template <typename T>
Tensor<T> Sem<T>::attention(const Tensor<T>& a) const {
  check(a);
  const std::size_t b = a.size(0), w = a.size(2) * a.size(3);
  const Tensor<T> q = reshape(query(a), {b, query.weight.size(0), w});
  const Tensor<T> k = reshape(key(a), {b, key.weight.size(0), w});
  // logits[i][j] = B_i . C_j, normalised over i.
  return softmax(matmul(transpose(q), k), 1);
}

template <typename T>
Tensor<T> Sem<T>::operator()(const Tensor<T>& a) const {
  const Tensor<T> s = attention(a);
  const std::size_t b = a.size(0), w = a.size(2) * a.size(3);
  const Tensor<T> d = reshape(value(a), {b, channels_, w});
  const Tensor<T> out = reshape(matmul(d, s), a.shape());
  return add(mul(lambda, out), a);
}

template class Sem<float>;
template class Sem<double>;

}  // namespace s3d
