#pragma once

// Tape-based reverse-mode differentiation. A Graph records one forward pass; backward() walks the
// tape in reverse and accumulates gradients into the Parameters that took part.

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "deforma/common/error.hpp"
#include "deforma/nn/tensor.hpp"

namespace deforma::nn {

class Graph;

// Handle to a node of a Graph.
struct Var {
    Graph* graph = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

class Graph {
public:
    // Receives the graph and the node being differentiated (whose gradient is populated).
    using BackwardFn = std::function<void(Graph&, Var self)>;

    explicit Graph(bool training = false, std::uint64_t seed = 0) : training_(training), rng_(seed) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool training() const { return training_; }
    std::mt19937_64& rng() { return rng_; }

    Var input(Tensor value, bool requires_grad = false)
    {
        nodes_.push_back({std::move(value), {}, {}, nullptr, requires_grad});
        return {this, nodes_.size() - 1};
    }

    Var parameter(Parameter& p)
    {
        nodes_.push_back({p.value, {}, {}, &p, true});
        return {this, nodes_.size() - 1};
    }

    // Records an operation result. `backward` is only called when some parent requires a gradient.
    Var record(Tensor value, const std::vector<Var>& parents, BackwardFn backward)
    {
        bool needs = false;
        for (const auto& p : parents) needs = needs || nodes_[p.id].requires_grad;
        nodes_.push_back({std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, nullptr, needs});
        return {this, nodes_.size() - 1};
    }

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

    // Gradient buffer of a node, allocated on first use.
    Tensor& grad(Var v)
    {
        auto& n = nodes_[v.id];
        if (n.grad.empty()) n.grad = Tensor(n.value.shape());
        return n.grad;
    }

    bool has_grad(Var v) const { return !nodes_[v.id].grad.empty(); }

    // Seeds d(loss)/d(loss) = 1 and propagates. Parameter gradients are added to Parameter::grad.
    void backward(Var loss)
    {
        if (nodes_.empty() || loss.graph != this || loss.id >= nodes_.size())
            throw StateError("backward called before a forward pass was recorded");
        if (value(loss).size() != 1) throw ShapeError("backward: loss must be a scalar");
        grad(loss).fill(1.0);
        for (std::size_t i = loss.id + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (n.grad.empty()) continue;
            if (n.backward) n.backward(*this, Var{this, i});
            if (n.param) n.param->grad += n.grad;
        }
    }

    // Non-smooth operations (ReLU, max pooling) fold their branch decisions into this hash so a
    // finite-difference check can tell when a perturbation crossed a kink.
    void note_pattern(std::uint64_t v)
    {
        pattern_ ^= v + 0x9e3779b97f4a7c15ULL + (pattern_ << 6) + (pattern_ >> 2);
    }
    std::uint64_t pattern() const { return pattern_; }
    void track_patterns(bool on) { track_patterns_ = on; }
    bool tracking_patterns() const { return track_patterns_; }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        BackwardFn backward;
        Parameter* param;
        bool requires_grad;
    };

    bool training_;
    std::mt19937_64 rng_;
    std::vector<Node> nodes_;
    std::uint64_t pattern_ = 0;
    bool track_patterns_ = false;
};

inline const Tensor& Var::value() const { return graph->value(*this); }

} // namespace deforma::nn
