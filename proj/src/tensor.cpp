#include "fragnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace fragnet {

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() noexcept { return grad_mode_enabled; }
void GradMode::set_enabled(bool enabled) noexcept { grad_mode_enabled = enabled; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <std::floating_point T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values, bool requires_grad) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) {
      throw ContractError("tensor extent " + std::to_string(i) + " is zero in shape " +
                          shape_str(shape));
    }
  }
  if (shape_numel(shape) != values.size()) {
    throw ContractError("shape " + shape_str(shape) + " needs " +
                        std::to_string(shape_numel(shape)) + " values, got " +
                        std::to_string(values.size()));
  }
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError("non-finite value in tensor initializer");
  }
  node_ = std::make_shared<NodeType>();
  node_->shape = std::move(shape);
  node_->data = std::move(values);
  node_->requires_grad = requires_grad;
}

template <std::floating_point T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <std::floating_point T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
  std::size_t n = shape_numel(shape);
  return BasicTensor(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <std::floating_point T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
  return BasicTensor(Shape{1}, std::vector<T>{value}, requires_grad);
}

template <std::floating_point T>
typename BasicTensor<T>::NodeType& BasicTensor<T>::checked() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return *node_;
}

template <std::floating_point T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ContractError("axis " + std::to_string(axis) + " out of range for shape " +
                        shape_str(s));
  }
  return s[axis];
}

template <std::floating_point T>
T BasicTensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_str(shape()));
  }
  return checked().data[0];
}

template <std::floating_point T>
void BasicTensor<T>::set_requires_grad(bool flag) {
  NodeType& n = checked();
  if (!n.is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
  n.requires_grad = flag;
}

template <std::floating_point T>
void BasicTensor<T>::zero_grad() {
  NodeType& n = checked();
  std::fill(n.grad.begin(), n.grad.end(), T(0));
}

template <std::floating_point T>
bool BasicTensor<T>::all_finite() const {
  for (T v : checked().data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <std::floating_point T>
void BasicTensor<T>::backward() const {
  if (numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!requires_grad()) {
    throw ContractError("backward() on a tensor that was not produced through the tape");
  }
  Tape<T>::record(*this).replay_backward();
}

template <std::floating_point T>
BasicTensor<T> BasicTensor<T>::detach() const {
  const NodeType& n = checked();
  return BasicTensor(n.shape, n.data, false);
}

template <std::floating_point T>
Tape<T> Tape<T>::record(const BasicTensor<T>& root) {
  Tape tape;
  tape.root_ = root.node();
  if (!tape.root_) throw ContractError("cannot record a tape from an undefined tensor");

  // Iterative post-order DFS; a node is emitted once all of its inputs are.
  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(tape.root_.get(), 0);
  seen.insert(tape.root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
      continue;
    }
    tape.nodes_.push_back(node);
    stack.pop_back();
  }
  return tape;
}

template <std::floating_point T>
void Tape<T>::replay_backward() {
  for (detail::Node<T>* node : nodes_) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), T(0));
  }
  std::vector<T>& seed = root_->ensure_grad();
  for (T& g : seed) g += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node<T>& node = **it;
    if (node.backward) node.backward(node);
  }
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace fragnet
