#include "dsct/autograd.hpp"

#include <algorithm>
#include <atomic>
#include <unordered_set>

#include "dsct/errors.hpp"

namespace dsct {

namespace {
thread_local bool g_grad_enabled = true;
std::atomic<std::uint64_t> g_sequence{0};
}  // namespace

std::uint64_t detail::next_sequence_number() { return ++g_sequence; }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T>* ParentGrads<T>::operator[](std::size_t parent) const {
  auto& p = node_.parents.at(parent);
  if (!p->requires_grad) return nullptr;
  return &p->grad_buffer();
}

template <typename T>
const Tensor<T>& ParentGrads<T>::value(std::size_t parent) const {
  return node_.parents.at(parent)->value;
}

template <typename T>
Var<T> Var<T>::constant(Tensor<T> value) {
  auto node = std::make_shared<detail::Node<T>>();
  node->value = std::move(value);
  node->seq = detail::next_sequence_number();
  return Var(std::move(node));
}

template <typename T>
Var<T> Var<T>::leaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<detail::Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad && grad_enabled();
  node->seq = detail::next_sequence_number();
  return Var(std::move(node));
}

template <typename T>
Var<T> Var<T>::parameter(const Parameter<T>& p) {
  auto node = std::make_shared<detail::Node<T>>();
  node->value = p.value;
  node->requires_grad = grad_enabled();
  node->param = &p;
  node->op = "param";
  node->seq = detail::next_sequence_number();
  return Var(std::move(node));
}

template <typename T>
Tensor<T> Var<T>::grad() const {
  if (node_->has_grad) return node_->grad;
  return Tensor<T>(node_->value.shape());
}

template <typename T>
Var<T> make_op(const char* name, Tensor<T> value, std::vector<Var<T>> parents,
               BackwardFn<T> backward) {
  auto node = std::make_shared<detail::Node<T>>();
  node->value = std::move(value);
  node->op = name;
  node->seq = detail::next_sequence_number();
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const Var<T>& v) { return v.requires_grad(); });
  if (any && grad_enabled()) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

template <typename T>
void backward(const Var<T>& loss) {
  if (!loss.defined() || loss.value().numel() != 1) {
    throw UsageError("backward() requires a single-element loss, got shape " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  using NodePtr = detail::Node<T>*;
  std::vector<NodePtr> order;
  std::unordered_set<NodePtr> seen;
  std::vector<NodePtr> stack{loss.node().get()};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    NodePtr n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
  }
  std::sort(order.begin(), order.end(), [](NodePtr a, NodePtr b) { return a->seq > b->seq; });

  for (NodePtr n : order) {
    n->has_grad = false;
  }
  loss.node()->grad_buffer().fill(T(1));

  for (NodePtr n : order) {
    if (!n->has_grad) continue;
    if (n->backward) {
      ParentGrads<T> parents(*n);
      n->backward(n->grad, parents);
    }
    if (n->param) n->param->grad.add_(n->grad);
  }
}

template class ParentGrads<float>;
template class ParentGrads<double>;
template class Var<float>;
template class Var<double>;
template Var<float> make_op(const char*, Tensor<float>, std::vector<Var<float>>, BackwardFn<float>);
template Var<double> make_op(const char*, Tensor<double>, std::vector<Var<double>>,
                             BackwardFn<double>);
template void backward(const Var<float>&);
template void backward(const Var<double>&);

}  // namespace dsct
