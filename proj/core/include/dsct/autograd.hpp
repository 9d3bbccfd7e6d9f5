#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dsct/tensor.hpp"

namespace dsct {

/// A named learnable tensor and its accumulated gradient.
///
/// The gradient buffer is filled by `backward()` through every graph leaf
/// created from this parameter; it is mutable so that parameters can be read
/// by a forward pass without being otherwise modified.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  mutable Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() const { grad = Tensor<T>(value.shape()); }
};

template <typename T>
class Var;

namespace detail {
template <typename T>
struct Node;
}

/// Handed to an op's backward closure; resolves gradient buffers of the
/// op's parents in the order they were passed to `make_op`.
template <typename T>
class ParentGrads {
 public:
  explicit ParentGrads(detail::Node<T>& node) : node_(node) {}
  // Zero-initialized accumulation buffer, or nullptr when the parent does
  // not require a gradient.
  Tensor<T>* operator[](std::size_t parent) const;
  const Tensor<T>& value(std::size_t parent) const;

 private:
  detail::Node<T>& node_;
};

template <typename T>
using BackwardFn = std::function<void(const Tensor<T>& grad_out, ParentGrads<T>& parents)>;

namespace detail {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  BackwardFn<T> backward;
  const Parameter<T>* param = nullptr;

  Tensor<T>& grad_buffer() {
    if (!has_grad) {
      grad = Tensor<T>(value.shape());
      has_grad = true;
    }
    return grad;
  }
};

std::uint64_t next_sequence_number();

}  // namespace detail

/// Whether new ops record backward closures. Thread-local.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Handle to a value in the reverse-mode graph.
///
/// Nodes are ordered by a monotonically increasing sequence number assigned at
/// creation, so parents always precede their children; backward visits nodes
/// in strictly decreasing sequence order and therefore accumulates shared
/// gradients in a fixed order.
template <typename T>
class Var {
 public:
  Var() = default;

  static Var constant(Tensor<T> value);
  static Var leaf(Tensor<T> value, bool requires_grad = true);
  static Var parameter(const Parameter<T>& p);

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  std::size_t dim(std::size_t axis) const { return node_->value.dim(axis); }
  bool requires_grad() const noexcept { return node_ && node_->requires_grad; }
  const char* op() const { return node_->op; }

  // Gradient after backward(); zeros if the node was not reached.
  Tensor<T> grad() const;

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }

 private:
  template <typename U>
  friend Var<U> make_op(const char*, Tensor<U>, std::vector<Var<U>>, BackwardFn<U>);

  explicit Var(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node<T>> node_;
};

/// Records an op result. `backward` is kept only if gradient recording is
/// enabled and at least one parent requires a gradient.
template <typename T>
Var<T> make_op(const char* name, Tensor<T> value, std::vector<Var<T>> parents,
               BackwardFn<T> backward);

/// Reverse-mode sweep from a single-element loss. Parameter leaves add their
/// gradient into `Parameter::grad`. Throws UsageError for non-scalar losses.
template <typename T>
void backward(const Var<T>& loss);

extern template class Var<float>;
extern template class Var<double>;

}  // namespace dsct
