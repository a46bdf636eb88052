#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "tensor/tensor.hpp"

namespace s3d {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Compares reverse-mode gradients of a scalar function with central
/// differences. The error per coordinate is
/// |analytic - numeric| / max(1, |numeric|); the maximum is returned.
///
/// `coordinates` restricts the check to a subset of flat indices (all when
/// empty), which keeps checks on large parameter tensors affordable.
GradCheckResult grad_check(const std::function<TensorD(const TensorD&)>& fn, const TensorD& point,
                           double eps, const std::vector<std::size_t>& coordinates = {});

/// Same comparison for a leaf tensor captured by `loss` (typically a model
/// parameter). The leaf is perturbed in place and restored afterwards.
GradCheckResult param_grad_check(TensorD& leaf, const std::function<TensorD()>& loss, double eps,
                                 const std::vector<std::size_t>& coordinates = {});

}  // namespace s3d
