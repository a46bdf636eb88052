#include "tensor/tensor.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

namespace s3d {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

bool GradMode::enabled() { return g_grad_enabled; }
void GradMode::set_enabled(bool on) { g_grad_enabled = on; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
std::vector<T>& TensorNode<T>::ensure_grad() {
  if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  return grad;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::vector<T> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw InvalidArgument("tensor: shape " + shape_str(shape) + " holds " +
                          std::to_string(shape_numel(shape)) + " elements but " +
                          std::to_string(values.size()) + " were given");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  if (!node_) throw InvalidArgument("tensor: use of undefined tensor");
  return node_->shape;
}

template <typename T>
std::size_t Tensor<T>::size(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw InvalidArgument("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                          shape_str(s));
  }
  return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return shape_numel(shape());
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
  if (!node_) throw InvalidArgument("tensor: use of undefined tensor");
  return node_->value;
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
  if (!node_) throw InvalidArgument("tensor: use of undefined tensor");
  return node_->value;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw InvalidArgument("tensor: item() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!node_) throw InvalidArgument("tensor: use of undefined tensor");
  node_->requires_grad = on;
  return *this;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return node_ && node_->grad.size() == node_->value.size() && !node_->value.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  if (!has_grad()) throw InvalidArgument("tensor: no gradient has been accumulated");
  return node_->grad;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (!node_) throw InvalidArgument("tensor: use of undefined tensor");
  return node_->ensure_grad();
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <typename T>
void Tensor<T>::backward() const {
  if (!node_) throw InvalidArgument("backward: undefined tensor");
  if (numel() != 1) {
    throw InvalidArgument("backward: output must be a scalar, got shape " + shape_str(shape()));
  }
  if (!node_->requires_grad) {
    throw InvalidArgument("backward: output does not depend on any tensor requiring grad");
  }

  // Iterative post-order DFS gives a topological order (inputs before users).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
  // The graph is single-use: drop edges and closures so intermediates can be freed.
  for (Node* node : order) {
    if (!node->inputs.empty() || node->backward_fn) {
      node->inputs.clear();
      node->backward_fn = nullptr;
    }
  }
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), std::vector<T>(values().begin(), values().end()), false);
}

template <typename T>
Tensor<T> make_op_result(const char* op, Shape shape, std::vector<T> values,
                         std::vector<Tensor<T>> inputs,
                         std::function<void(TensorNode<T>&)> backward_fn) {
  auto node = std::make_shared<TensorNode<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor<T>(std::move(node));
}

template <typename T, typename U>
Tensor<T> tensor_cast(const Tensor<U>& x) {
  std::vector<T> out(x.values().begin(), x.values().end());
  return Tensor<T>::from(x.shape(), std::move(out), x.requires_grad());
}

template struct TensorNode<float>;
template struct TensorNode<double>;
template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> make_op_result(const char*, Shape, std::vector<float>,
                                      std::vector<Tensor<float>>,
                                      std::function<void(TensorNode<float>&)>);
template Tensor<double> make_op_result(const char*, Shape, std::vector<double>,
                                       std::vector<Tensor<double>>,
                                       std::function<void(TensorNode<double>&)>);
template Tensor<float> tensor_cast(const Tensor<double>&);
template Tensor<double> tensor_cast(const Tensor<float>&);
template Tensor<float> tensor_cast(const Tensor<float>&);
template Tensor<double> tensor_cast(const Tensor<double>&);

}  // namespace s3d
