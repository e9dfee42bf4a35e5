#include "gfn/autograd.hpp"

#include <string>

namespace gfn {

template <typename T>
Var<T> Graph<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad && grad_enabled_;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node node;
  node.value = std::move(value);
  if (grad_enabled_) {
    for (std::size_t in : inputs) {
      if (nodes_[in].requires_grad) {
        node.requires_grad = true;
        break;
      }
    }
  }
  if (node.requires_grad) {
    node.inputs = std::move(inputs);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Tensor<T>* Graph<T>::input_grad(std::size_t self, std::size_t i) {
  Node& in = nodes_[nodes_[self].inputs[i]];
  if (!in.requires_grad) return nullptr;
  if (in.grad.empty() && in.value.size() != 0) in.grad = Tensor<T>(in.value.shape());
  return &in.grad;
}

template <typename T>
Tensor<T> Graph<T>::grad(const Var<T>& v) const {
  const Node& node = nodes_[v.id()];
  if (node.grad.empty()) return Tensor<T>(node.value.shape());
  return node.grad;
}

template <typename T>
void Graph<T>::backward(const Var<T>& loss) {
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be a single scalar, got shape " + loss.shape().str());
  }
  for (Node& node : nodes_) node.grad = Tensor<T>();
  last_visits_ = 0;
  Node& root = nodes_[loss.id()];
  if (!root.requires_grad) return;
  root.grad = Tensor<T>(root.value.shape(), T(1));
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.backward || node.grad.empty()) continue;
    node.backward(*this, id);
    ++last_visits_;
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace gfn
