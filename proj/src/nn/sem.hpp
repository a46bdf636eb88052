#pragma once

#include "nn/layers.hpp"

namespace s3d {

/// Position-aware attention over a feature map A[B,C,N,M] with W = N*M:
/// B = conv1x1(A), C = conv1x1(A) with max(1, C/2) channels, D = conv1x1(A) with C
/// channels, s_ij = softmax_i(B_i . C_j), F_j = lambda * sum_i s_ij D_i + A_j.
template <typename T>
class Sem {
 public:
  Sem() = default;
  Sem(ParamList<T>& params, const std::string& prefix, std::size_t channels, Rng& rng);

  Tensor<T> operator()(const Tensor<T>& a) const;
  /// The attention matrix s[B,W,W] (rows i, columns j).
  Tensor<T> attention(const Tensor<T>& a) const;

  Conv2dLayer<T> query, key, value;
  Tensor<T> lambda;  // [1], zero at initialisation

 private:
  void check(const Tensor<T>& a) const;
  std::size_t channels_ = 0;
};

}  // namespace s3d
