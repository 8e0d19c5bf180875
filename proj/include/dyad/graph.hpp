#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dyad/types.hpp"

namespace dyad::numerics {

struct Shape {
  Index rows = 1;
  Index cols = 1;

  Index size() const { return rows * cols; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& shape);

inline Shape shape_of(const Tensor& t) { return {t.rows(), t.cols()}; }

/// Raised when operand shapes are incompatible. The message names the node.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for structural misuse: unbound leaves, non-scalar backward roots, duplicate names.
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A differentiable primitive. Implementations are stateless apart from their
/// construction-time attributes (stride, head count, ...).
class Op {
 public:
  virtual ~Op() = default;

  virtual std::string name() const = 0;
  /// Throws ShapeError (without node context; the graph adds it).
  virtual Shape infer_shape(std::span<const Shape> inputs) const = 0;
  virtual void forward(std::span<const Tensor* const> inputs, Tensor& out) const = 0;
  /// Accumulates into grads[i]; grads[i] is nullptr when input i needs no gradient.
  virtual void backward(std::span<const Tensor* const> inputs, const Tensor& out,
                        const Tensor& grad_out, std::span<Tensor* const> grads) const = 0;
};

enum class NodeKind { kInput, kParameter, kConstant, kOperation };

struct Node {
  NodeKind kind = NodeKind::kConstant;
  std::string label;
  Shape shape;
  std::shared_ptr<const Op> op;
  std::vector<std::size_t> inputs;
  Tensor value;  // constants only
  bool needs_grad = false;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  Shape shape() const;
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Recorded computation. Nodes are appended in topological order, so every
/// node's inputs precede it. A graph is structure only; values live in an
/// Evaluation, which keeps evaluation free of hidden state.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(std::string name, Shape shape);
  Var parameter(std::string name, Shape shape);
  Var constant(Tensor value);
  Var apply(std::shared_ptr<const Op> op, std::vector<Var> inputs);

  void set_output(std::string name, Var v);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_.at(id); }
  Var var(std::size_t id) { return {this, id}; }
  const std::vector<std::pair<std::string, std::size_t>>& outputs() const { return outputs_; }
  std::optional<std::size_t> find_leaf(const std::string& name) const;
  std::optional<std::size_t> find_output(const std::string& name) const;
  std::vector<std::string> leaf_names(NodeKind kind) const;

 private:
  Var add_leaf(NodeKind kind, std::string name, Shape shape);

  std::vector<Node> nodes_;
  std::vector<std::pair<std::string, std::size_t>> outputs_;
};

/// Values of every node for one set of bindings.
class Evaluation {
 public:
  const Tensor& operator[](Var v) const { return values_.at(v.id()); }
  const Tensor& value(std::size_t id) const { return values_.at(id); }
  std::size_t size() const { return values_.size(); }

 private:
  friend Evaluation evaluate(const Graph&, std::span<const NamedTensors* const>);
  std::vector<Tensor> values_;
};

/// Evaluates every node. Leaves are looked up by name across `bindings` in order.
Evaluation evaluate(const Graph& graph, std::span<const NamedTensors* const> bindings);
Evaluation evaluate(const Graph& graph, const NamedTensors& bindings);
Evaluation evaluate(const Graph& graph, const NamedTensors& first, const NamedTensors& second);

/// Evaluates the graph and returns its named outputs.
NamedTensors forward_eval(const Graph& graph, const NamedTensors& bindings);

/// Reverse-mode gradients of a scalar node with respect to every leaf
/// (inputs and parameters). Leaves the output does not depend on get zeros.
NamedTensors backward(const Graph& graph, const Evaluation& values, Var output);

}  // namespace dyad::numerics
