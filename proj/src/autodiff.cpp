#include "pnerv/autodiff.hpp"

namespace pnerv::ad {

const Tape::Node& Tape::node(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("variable " + std::to_string(v.id) + " is not on the tape");
    return nodes_[v.id];
}

Var Tape::leaf(Tensor value, bool requires_grad, std::string kind) {
    Node n;
    n.kind = std::move(kind);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::record(std::string kind, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
    Node n;
    n.kind = std::move(kind);
    n.value = std::move(value);
    for (Var in : inputs) n.requires_grad = n.requires_grad || node(in).requires_grad;
    n.inputs = std::move(inputs);
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

void Tape::backward(Var root) {
    const Node& r = node(root);
    if (r.value.size() != 1) throw std::invalid_argument("backward root must be scalar, got " + shape_str(r.value.shape()));
    for (auto& n : nodes_) n.grad = Tensor();
    nodes_[root.id].grad = Tensor(r.value.shape(), 1.0);

    std::vector<Tensor*> grad_in;
    for (std::size_t i = root.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (n.grad.empty() || !n.backward) continue;
        grad_in.clear();
        for (Var in : n.inputs) {
            Node& src = nodes_[in.id];
            if (!src.requires_grad) {
                grad_in.push_back(nullptr);
                continue;
            }
            if (src.grad.empty()) src.grad = Tensor(src.value.shape());
            grad_in.push_back(&src.grad);
        }
        n.backward(n.grad, grad_in);
    }
}

Tensor Tape::grad(Var v) const {
    const Node& n = node(v);
    return n.grad.empty() ? Tensor(n.value.shape()) : n.grad;
}

}  // namespace pnerv::ad
