#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <vector>

#include "gfn/tensor.hpp"

namespace gfn {

template <typename T>
class Graph;

/// Handle to a value recorded on a Graph.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  Graph<T>& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of recorded operations for reverse-mode differentiation.
///
/// Nodes are appended in creation order, so iterating ids downward is a
/// reverse topological order. Gradients are summed over fan-out.
template <typename T>
class Graph {
 public:
  /// Called once per node during backward. Reads the node's gradient and
  /// accumulates into input_grad() slots.
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf value. Parameters and inputs under test use requires_grad = true.
  Var<T> leaf(Tensor<T> value, bool requires_grad = false);

  /// Records the result of an op. The backward function is dropped when no
  /// input needs a gradient or when the graph has gradients disabled.
  Var<T> record(Tensor<T> value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool grad_enabled() const { return grad_enabled_; }

  /// Gradient after backward(); a zero tensor for nodes the loss does not
  /// depend on.
  Tensor<T> grad(const Var<T>& v) const;

  /// Runs reverse-mode differentiation from a single-element loss.
  void backward(const Var<T>& loss);

  /// Number of op nodes whose backward ran during the last backward().
  std::size_t last_backward_visits() const { return last_visits_; }
  std::size_t size() const { return nodes_.size(); }

  // Access used by backward functions.
  const Tensor<T>& out_grad(std::size_t self) const { return nodes_[self].grad; }
  const Tensor<T>& input_value(std::size_t self, std::size_t i) const {
    return nodes_[nodes_[self].inputs[i]].value;
  }
  /// Gradient accumulator of input i, zero-initialised on first use;
  /// nullptr when that input does not need a gradient.
  Tensor<T>* input_grad(std::size_t self, std::size_t i);

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;  // stable references on append
  bool grad_enabled_ = true;
  std::size_t last_visits_ = 0;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph_->value(id_);
}

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace gfn
