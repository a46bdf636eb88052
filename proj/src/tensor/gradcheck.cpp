#include "tensor/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace s3d {

GradCheckResult grad_check(const std::function<TensorD(const TensorD&)>& fn, const TensorD& point,
                           double eps, const std::vector<std::size_t>& coordinates) {
  if (!(eps > 0.0)) throw InvalidArgument("grad_check: eps must be positive");

  std::vector<double> base(point.values().begin(), point.values().end());
  auto x = TensorD::from(point.shape(), base, true);
  TensorD y = fn(x);
  if (y.numel() != 1) {
    throw InvalidArgument("grad_check: function output must be a scalar, got shape " + shape_str(y.shape()));
  }
  std::vector<double> analytic(base.size(), 0.0);
  if (y.requires_grad()) {
    y.backward();
    if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());
  }

  std::vector<std::size_t> coords = coordinates;
  if (coords.empty()) {
    coords.resize(base.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
  }

  NoGradGuard no_grad;
  GradCheckResult result;
  for (std::size_t i : coords) {
    if (i >= base.size()) throw InvalidArgument("grad_check: coordinate out of range");
    std::vector<double> probe = base;
    probe[i] = base[i] + eps;
    const double plus = fn(TensorD::from(point.shape(), probe)).item();
    probe[i] = base[i] - eps;
    const double minus = fn(TensorD::from(point.shape(), probe)).item();
    const double numeric = (plus - minus) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    if (err >= result.max_relative_error) {
      result = {err, i, analytic[i], numeric};
    }
  }
  return result;
}

GradCheckResult param_grad_check(TensorD& leaf, const std::function<TensorD()>& loss, double eps,
                                 const std::vector<std::size_t>& coordinates) {
  if (!(eps > 0.0)) throw InvalidArgument("param_grad_check: eps must be positive");
  const bool had_grad = leaf.requires_grad();
  leaf.set_requires_grad(true);
  leaf.zero_grad();
  TensorD y = loss();
  if (y.numel() != 1) {
    throw InvalidArgument("param_grad_check: loss must be a scalar, got shape " + shape_str(y.shape()));
  }
  std::vector<double> analytic(leaf.numel(), 0.0);
  if (y.requires_grad()) {
    y.backward();
    if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());
  }

  std::vector<std::size_t> coords = coordinates;
  if (coords.empty()) {
    coords.resize(analytic.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
  }

  NoGradGuard no_grad;
  GradCheckResult result;
  auto vals = leaf.mutable_values();
  for (std::size_t i : coords) {
    if (i >= vals.size()) throw InvalidArgument("param_grad_check: coordinate out of range");
    const double saved = vals[i];
    vals[i] = saved + eps;
    const double plus = loss().item();
    vals[i] = saved - eps;
    const double minus = loss().item();
    vals[i] = saved;
    const double numeric = (plus - minus) / (2.0 * eps);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    if (err >= result.max_relative_error) {
      result = {err, i, analytic[i], numeric};
    }
  }
  leaf.zero_grad();
  leaf.set_requires_grad(had_grad);
  return result;
}

}  // namespace s3d
