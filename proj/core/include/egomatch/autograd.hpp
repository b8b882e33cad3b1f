#ifndef EGOMATCH_AUTOGRAD_HPP
#define EGOMATCH_AUTOGRAD_HPP

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "egomatch/tensor.hpp"

namespace egomatch {

/// A trainable tensor together with its gradient accumulator.
///
/// Gradients from every use inside every graph are summed into `grad`;
/// callers reset it with zero_grad() between optimizer steps.
struct Parameter {
    Parameter() = default;
    Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad = Tensor(value.shape()); }

    std::string name;
    Tensor value;
    Tensor grad;
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    /// Gradient accumulated by the last backward pass (zeros if unreached).
    const Tensor& grad() const;
    const Shape& shape() const { return value().shape(); }

    Graph& graph() const;
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return graph_ != nullptr; }

private:
    friend class Graph;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in creation order, so node index
/// order is a topological order and backward is a single reverse sweep.
///
/// A graph is confined to one thread. Parameters are read through a pointer,
/// so several graphs may read a frozen parameter set concurrently.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t self)>;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf that never receives a gradient.
    Var constant(Tensor value);
    /// Leaf whose gradient is kept on the node (readable via Var::grad).
    Var variable(Tensor value);
    /// Leaf bound to a parameter; one node per parameter per graph.
    Var parameter(Parameter& p);

    /// Record an op result. `fn` reads grad(self) and accumulates into its inputs.
    Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn fn);

    /// Propagate d(root)/d(node) to every node reachable from a scalar root.
    /// Parameter gradients are added to Parameter::grad.
    void backward(Var root);

    const Tensor& value(std::size_t id) const;
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    /// Gradient buffer of a node, allocated as zeros on first access.
    Tensor& grad(std::size_t id);
    const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Parameter* param = nullptr;
        Tensor grad;
        bool has_grad = false;
        bool requires_grad = false;
        std::vector<std::size_t> inputs;
        BackwardFn backward;
    };

    Var push(Node node);

    // deque: references to node values stay valid while the graph grows
    std::deque<Node> nodes_;
    std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

}  // namespace egomatch

#endif  // EGOMATCH_AUTOGRAD_HPP
