#pragma once

#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fragnet/errors.hpp"

namespace fragnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Training/inference switch for layers whose behaviour differs (batchnorm).
enum class Mode { Train, Infer };

// Global (per-thread) switch for graph recording. Inference paths wrap their
// forward pass in a NoGradGuard so that no tape nodes are allocated.
class GradMode {
 public:
  static bool enabled() noexcept;
  static void set_enabled(bool enabled) noexcept;
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

template <std::floating_point T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a backward pass touches the node
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Propagates this->grad into the inputs' grad buffers.
  std::function<void(Node&)> backward;
  // Set by softmax so cross_entropy can apply the fused rule on the logits.
  std::shared_ptr<Node> softmax_logits;

  bool is_leaf() const noexcept { return inputs.empty(); }
  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), T(0));
    return grad;
  }
};

}  // namespace detail

// Dense row-major n-dimensional array. Copies share the underlying buffer;
// a Tensor is a handle, and parameters are updated in place by the optimizer.
template <std::floating_point T>
class BasicTensor {
 public:
  using value_type = T;
  using NodeType = detail::Node<T>;

  BasicTensor() = default;
  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static BasicTensor zeros(Shape shape, bool requires_grad = false);
  static BasicTensor full(Shape shape, T value, bool requires_grad = false);
  static BasicTensor scalar(T value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return checked().shape; }
  std::size_t rank() const { return checked().shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return checked().data.size(); }

  std::span<const T> values() const { return checked().data; }
  // Direct write access. Only meaningful for leaves (parameters, inputs).
  std::span<T> mutable_values() { return checked().data; }
  T operator[](std::size_t flat) const { return checked().data[flat]; }
  T item() const;

  bool requires_grad() const { return checked().requires_grad; }
  void set_requires_grad(bool flag);
  bool has_grad() const { return !checked().grad.empty(); }
  // Zero-length span when no gradient has been accumulated.
  std::span<const T> grad() const { return checked().grad; }
  std::span<T> mutable_grad() { return checked().ensure_grad(); }
  void zero_grad();

  bool all_finite() const;

  // Reverse-mode pass from a scalar loss. Leaf gradients accumulate.
  void backward() const;

  BasicTensor detach() const;
  bool same_storage(const BasicTensor& other) const noexcept { return node_ == other.node_; }

  const std::shared_ptr<NodeType>& node() const noexcept { return node_; }
  static BasicTensor from_node(std::shared_ptr<NodeType> node) {
    BasicTensor t;
    t.node_ = std::move(node);
    return t;
  }

 private:
  NodeType& checked() const;
  std::shared_ptr<NodeType> node_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

// Topologically ordered record of the operations reachable from a root.
// Every node appears after all of its inputs; replay runs in reverse.
template <std::floating_point T>
class Tape {
 public:
  static Tape record(const BasicTensor<T>& root);

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<detail::Node<T>*>& nodes() const noexcept { return nodes_; }

  // Seeds the root gradient with 1 and visits each node once, root first.
  void replay_backward();

 private:
  std::shared_ptr<detail::Node<T>> root_;
  std::vector<detail::Node<T>*> nodes_;
};

}  // namespace fragnet
