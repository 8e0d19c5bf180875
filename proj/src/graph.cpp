#include "dyad/graph.hpp"

#include <algorithm>

namespace dyad::numerics {

std::string to_string(const Shape& shape) {
  return "(" + std::to_string(shape.rows) + "x" + std::to_string(shape.cols) + ")";
}

Shape Var::shape() const { return graph_->node(id_).shape; }

Var Graph::add_leaf(NodeKind kind, std::string name, Shape shape) {
  if (shape.rows < 1 || shape.cols < 1) {
    throw ShapeError("leaf '" + name + "': dimensions must be >= 1, got " + to_string(shape));
  }
  if (find_leaf(name)) throw GraphError("duplicate leaf name '" + name + "'");
  Node n;
  n.kind = kind;
  n.label = std::move(name);
  n.shape = shape;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::input(std::string name, Shape shape) {
  return add_leaf(NodeKind::kInput, std::move(name), shape);
}

Var Graph::parameter(std::string name, Shape shape) {
  return add_leaf(NodeKind::kParameter, std::move(name), shape);
}

Var Graph::constant(Tensor value) {
  Node n;
  n.kind = NodeKind::kConstant;
  n.label = "const#" + std::to_string(nodes_.size());
  n.shape = shape_of(value);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::apply(std::shared_ptr<const Op> op, std::vector<Var> inputs) {
  Node n;
  n.kind = NodeKind::kOperation;
  n.label = op->name() + "#" + std::to_string(nodes_.size());
  std::vector<Shape> shapes;
  shapes.reserve(inputs.size());
  for (const Var& v : inputs) {
    if (&v.graph() != this) throw GraphError(n.label + ": operand belongs to another graph");
    n.inputs.push_back(v.id());
    shapes.push_back(nodes_[v.id()].shape);
    n.needs_grad = n.needs_grad || nodes_[v.id()].needs_grad;
  }
  try {
    n.shape = op->infer_shape(shapes);
  } catch (const ShapeError& e) {
    throw ShapeError(n.label + ": " + e.what());
  }
  n.op = std::move(op);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

void Graph::set_output(std::string name, Var v) {
  if (find_output(name)) throw GraphError("duplicate output name '" + name + "'");
  outputs_.emplace_back(std::move(name), v.id());
}

std::optional<std::size_t> Graph::find_leaf(const std::string& name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if ((n.kind == NodeKind::kInput || n.kind == NodeKind::kParameter) && n.label == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Graph::find_output(const std::string& name) const {
  for (const auto& [n, id] : outputs_) {
    if (n == name) return id;
  }
  return std::nullopt;
}

std::vector<std::string> Graph::leaf_names(NodeKind kind) const {
  std::vector<std::string> names;
  for (const Node& n : nodes_) {
    if (n.kind == kind) names.push_back(n.label);
  }
  return names;
}

Evaluation evaluate(const Graph& graph, std::span<const NamedTensors* const> bindings) {
  Evaluation ev;
  ev.values_.resize(graph.size());
  std::vector<const Tensor*> args;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const Node& n = graph.node(i);
    switch (n.kind) {
      case NodeKind::kConstant:
        ev.values_[i] = n.value;
        break;
      case NodeKind::kInput:
      case NodeKind::kParameter: {
        const Tensor* bound = nullptr;
        for (const NamedTensors* set : bindings) {
          auto it = set->find(n.label);
          if (it != set->end()) {
            bound = &it->second;
            break;
          }
        }
        if (bound == nullptr) throw GraphError("leaf '" + n.label + "' is not bound");
        if (shape_of(*bound) != n.shape) {
          throw ShapeError("leaf '" + n.label + "': bound " + to_string(shape_of(*bound)) +
                           ", declared " + to_string(n.shape));
        }
        ev.values_[i] = *bound;
        break;
      }
      case NodeKind::kOperation: {
        args.clear();
        for (std::size_t in : n.inputs) args.push_back(&ev.values_[in]);
        n.op->forward(args, ev.values_[i]);
        if (shape_of(ev.values_[i]) != n.shape) {
          throw ShapeError(n.label + ": produced " + to_string(shape_of(ev.values_[i])) +
                           ", expected " + to_string(n.shape));
        }
        break;
      }
    }
  }
  return ev;
}

Evaluation evaluate(const Graph& graph, const NamedTensors& bindings) {
  const NamedTensors* sets[] = {&bindings};
  return evaluate(graph, sets);
}

Evaluation evaluate(const Graph& graph, const NamedTensors& first, const NamedTensors& second) {
  const NamedTensors* sets[] = {&first, &second};
  return evaluate(graph, sets);
}

NamedTensors forward_eval(const Graph& graph, const NamedTensors& bindings) {
  Evaluation ev = evaluate(graph, bindings);
  NamedTensors out;
  for (const auto& [name, id] : graph.outputs()) out.emplace(name, ev.value(id));
  return out;
}

NamedTensors backward(const Graph& graph, const Evaluation& values, Var output) {
  const Node& root = graph.node(output.id());
  if (root.shape != Shape{1, 1}) {
    throw GraphError("backward: output '" + root.label + "' is not scalar " +
                     to_string(root.shape));
  }
  std::vector<Tensor> grads(output.id() + 1);
  grads[output.id()] = Tensor::Ones(1, 1);

  std::vector<const Tensor*> args;
  std::vector<Tensor*> gptrs;
  for (std::size_t i = output.id() + 1; i-- > 0;) {
    const Node& n = graph.node(i);
    if (n.kind != NodeKind::kOperation || grads[i].size() == 0) continue;
    args.clear();
    gptrs.clear();
    for (std::size_t in : n.inputs) {
      args.push_back(&values.value(in));
      const Node& src = graph.node(in);
      if (!src.needs_grad) {
        gptrs.push_back(nullptr);
        continue;
      }
      if (grads[in].size() == 0) grads[in] = Tensor::Zero(src.shape.rows, src.shape.cols);
      gptrs.push_back(&grads[in]);
    }
    n.op->backward(args, values.value(i), grads[i], gptrs);
  }

  NamedTensors out;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const Node& n = graph.node(i);
    if (n.kind != NodeKind::kInput && n.kind != NodeKind::kParameter) continue;
    if (i < grads.size() && grads[i].size() != 0) {
      out.emplace(n.label, std::move(grads[i]));
    } else {
      out.emplace(n.label, Tensor::Zero(n.shape.rows, n.shape.cols));
    }
  }
  return out;
}

}  // namespace dyad::numerics
