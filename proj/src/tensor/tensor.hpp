#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "common/errors.hpp"

namespace s3d {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Thread-local switch for graph recording. Inference paths run under a
// NoGradGuard so that shared weights are only ever read.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something is accumulated
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> inputs;
  // Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(TensorNode&)> backward_fn;

  bool is_leaf() const { return inputs.empty() && !backward_fn; }
  std::vector<T>& ensure_grad();
};

/// Dense row-major tensor with reverse-mode differentiation.
///
/// A Tensor is a shared handle: copies alias the same storage, as in most
/// autograd frameworks. Values are immutable once an op has produced them;
/// leaves (parameters) may be updated in place through mutable_values()
/// between graph constructions.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Node = TensorNode<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> values() const;
  std::span<T> mutable_values();
  T item() const;
  T at(std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const T> grad() const;
  std::span<T> mutable_grad();
  void zero_grad();

  /// Runs reverse-mode accumulation from this scalar through the recorded graph.
  void backward() const;

  /// Same values, cut from the graph.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Builds an op output. When grad mode is on and any input requires grad,
/// the result records its inputs and the vector-Jacobian closure.
template <typename T>
Tensor<T> make_op_result(const char* op, Shape shape, std::vector<T> values,
                         std::vector<Tensor<T>> inputs,
                         std::function<void(TensorNode<T>&)> backward_fn);

template <typename T, typename U>
Tensor<T> tensor_cast(const Tensor<U>& x);

}  // namespace s3d
