#include "egomatch/autograd.hpp"

#include <algorithm>

namespace egomatch {

const Tensor& Var::value() const { return graph().value(id_); }

const Tensor& Var::grad() const { return graph().grad(id_); }

Graph& Var::graph() const {
    if (!graph_) throw std::logic_error("use of an unbound Var");
    return *graph_;
}

Var Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
}

Var Graph::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Graph::variable(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

Var Graph::parameter(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    if (p.grad.shape() != p.value.shape()) p.zero_grad();
    Node n;
    n.param = &p;
    n.requires_grad = true;
    Var v = push(std::move(n));
    param_nodes_.emplace(&p, v.id());
    return v;
}

Var Graph::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) {
        if (i >= nodes_.size()) throw std::out_of_range("op input refers to a node outside this graph");
        return nodes_[i].requires_grad;
    });
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(fn);
    return push(std::move(n));
}

const Tensor& Graph::value(std::size_t id) const {
    const Node& n = nodes_.at(id);
    return n.param ? n.param->value : n.value;
}

Tensor& Graph::grad(std::size_t id) {
    Node& n = nodes_.at(id);
    if (n.param) return n.param->grad;
    if (!n.has_grad) {
        n.grad = Tensor(value(id).shape());
        n.has_grad = true;
    }
    return n.grad;
}

void Graph::backward(Var root) {
    if (&root.graph() != this) throw std::invalid_argument("backward root belongs to another graph");
    const std::size_t r = root.id();
    if (value(r).size() != 1) {
        throw ShapeError("backward requires a scalar root, got shape " + shape_str(value(r).shape()));
    }
    for (Node& n : nodes_) {
        if (!n.param) {
            n.grad = Tensor();
            n.has_grad = false;
        }
    }
    grad(r)[0] += 1.0;
    for (std::size_t i = r + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || !n.backward) continue;
        if (!n.has_grad) continue;
        n.backward(*this, i);
    }
}

}  // namespace egomatch
