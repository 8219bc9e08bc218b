#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "vfl/tensor.hpp"

namespace vfl::ad {

class Tape;

using NodeId = std::uint32_t;

// Handle to a node on a Tape. Cheap to copy; only valid for the tape that
// created it.
class Var {
public:
    Var() = default;
    NodeId id() const { return id_; }
    const Tape* tape() const { return tape_; }

private:
    friend class Tape;
    Var(const Tape* tape, NodeId id) : tape_(tape), id_(id) {}
    const Tape* tape_ = nullptr;
    NodeId id_ = 0;
};

// Gradients keyed by tape node. Contains exactly one entry per trainable
// parameter (and per gradient-tracked input) of the tape that produced it.
class GradientMap {
public:
    const Tensor& at(Var v) const;
    bool contains(Var v) const;
    std::size_t size() const { return entries_.size(); }

    // this += alpha * other. Entry sets must match.
    void axpy(double alpha, const GradientMap& other);
    void scale(double alpha);

    const std::vector<std::pair<NodeId, Tensor>>& entries() const { return entries_; }

private:
    friend class Tape;
    std::vector<std::pair<NodeId, Tensor>> entries_;  // sorted by node id
};

// Set of parameter nodes whose gradient entries are forced to zero in a
// backward pass. Gradients still flow *through* the nodes they parameterize
// into earlier parts of the graph.
class ParamBlock {
public:
    ParamBlock() = default;
    bool blocked(NodeId id) const;

private:
    friend class Tape;
    std::vector<NodeId> ids_;  // sorted
};

// Reverse-mode autodiff over a define-by-run tape. Values are computed as
// the graph is built; backward() replays the tape in reverse. A tape is
// confined to one thread during a forward/backward pass.
class Tape {
public:
    // Vars hold the tape's address, so a tape is pinned in place once nodes
    // exist; heap-allocate it when it must outlive a scope.
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = delete;
    Tape& operator=(Tape&&) = delete;

    // Leaves.
    Var input(Tensor value, bool requires_grad = false);
    Var param(Tensor value);

    // Primitives. Elementwise binaries require identical shapes; use
    // broadcast() to align them first.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var matmul(Var a, Var b);
    Var relu(Var a);      // gradient at exactly 0 is 0
    Var sigmoid(Var a);
    Var sqrt(Var a);
    Var log(Var a);
    Var exp(Var a);
    Var sum(Var a);       // all elements -> scalar
    Var mean(Var a);
    Var broadcast(Var a, std::vector<std::size_t> target);
    Var transpose(Var a);
    Var concat(Var a, Var b, std::size_t axis);
    Var slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1);

    // Extension point for composite nodes with a custom gradient rule (the
    // gradient reversal layer is built on this). The rule receives the
    // upstream adjoint and returns one adjoint contribution per input.
    using GradRule = std::function<std::vector<Tensor>(const Tensor& upstream)>;
    Var custom(const char* op, Tensor value, std::vector<Var> inputs, GradRule rule);

    const Tensor& value(Var v) const;
    std::size_t node_count() const { return nodes_.size(); }

    // Marks parameter nodes whose gradients a backward pass must suppress.
    // Throws if any var is foreign to this tape or not a parameter.
    ParamBlock block_parameter_gradients(std::span<const Var> params) const;

    // Reverse pass from `root` seeded with `seed` (same shape as the root
    // value). Returns gradients of sum(seed * root) for every parameter and
    // tracked input; entries for blocked parameters are zero.
    GradientMap backward(Var root, const Tensor& seed) const;
    GradientMap backward(Var root, const Tensor& seed, const ParamBlock& blocked) const;

private:
    struct Node {
        Tensor value;
        std::vector<NodeId> inputs;
        GradRule grad;           // empty for leaves
        bool requires_grad = false;
        bool is_param = false;
        bool tracked = false;    // param or gradient-tracked input
        const char* op = "leaf";
    };

    Var push(Node node);
    const Node& node(Var v) const;
    void check_owned(Var v, const char* op) const;
    bool any_requires_grad(std::span<const Var> vs) const;

    // deque: node references stay valid while the graph keeps growing
    std::deque<Node> nodes_;
};

// Central finite differences (f(x+h e_i) - f(x-h e_i)) / (2h), the
// independent gradient oracle used by the test suites. Throws if h <= 0 or
// f evaluates to a non-finite value.
Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h);

}  // namespace vfl::ad
