#pragma once

#include "pnerv/tensor.hpp"

#include <functional>
#include <string>
#include <vector>

namespace pnerv::ad {

/// Handle to a value recorded on a Tape.
struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    friend bool operator==(Var, Var) = default;
};

/// Receives the gradient of the node's output and accumulates into the
/// gradients of its inputs. Entries of `grad_in` are null for inputs that do
/// not require a gradient.
using BackwardFn = std::function<void(const Tensor& grad_out, std::span<Tensor* const> grad_in)>;

/// Reverse-mode autodiff record. Nodes are appended in evaluation order, so the
/// node list is topologically sorted by construction.
class Tape {
public:
    Var leaf(Tensor value, bool requires_grad = true, std::string kind = "leaf");
    Var record(std::string kind, Tensor value, std::vector<Var> inputs, BackwardFn backward);

    const Tensor& value(Var v) const { return node(v).value; }
    const std::string& kind(Var v) const { return node(v).kind; }
    const std::vector<Var>& inputs(Var v) const { return node(v).inputs; }
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Seeds d(root)/d(root) = 1 and propagates to every reachable node.
    /// Gradients accumulate additively across fan-out. Throws if `root` is not
    /// on this tape or is not a single scalar.
    void backward(Var root);

    bool has_grad(Var v) const { return !node(v).grad.empty(); }
    /// Gradient of the last backward root w.r.t. `v` (zeros when unreachable).
    Tensor grad(Var v) const;

private:
    struct Node {
        std::string kind;
        Tensor value;
        std::vector<Var> inputs;
        BackwardFn backward;
        bool requires_grad = false;
        Tensor grad;
    };

    const Node& node(Var v) const;

    std::vector<Node> nodes_;
};

}  // namespace pnerv::ad
