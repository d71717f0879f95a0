// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/tape.hpp"

#include <cmath>

#include "occ/error.hpp"

namespace occ::ad {

const Tensor& Var::value() const { return tape->value(*this); }
const Shape& Var::shape() const { return tape->value(*this).shape(); }
std::size_t Var::numel() const { return tape->value(*this).numel(); }

Var Tape::leaf(Tensor value) {
    Node n;
    n.kind = "leaf";
    n.value = std::move(value);
    n.requires_grad = true;
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
    Node n;
    n.kind = "constant";
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(std::string_view kind, Tensor value, std::vector<Var> parents, BackwardFn backward) {
    Node n;
    n.kind = kind;
    n.value = std::move(value);
    n.backward = std::move(backward);
    for (const auto& p : parents) {
        require(p.tape == this, "operand belongs to a different tape");
        require(p.id < nodes_.size(), "operand id out of range");
        n.parents.push_back(p.id);
        n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
    }
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor Tape::grad(Var v) const {
    const auto& n = nodes_.at(v.id);
    if (n.grad.empty()) {
        return Tensor(n.value.shape(), 0.0);
    }
    return n.grad;
}

void Tape::backward(Var out) {
    require(out.tape == this, "backward: output belongs to a different tape");
    const auto& ov = nodes_.at(out.id).value;
    require(ov.shape() == Shape{1}, "backward: output must have shape [1], got " + shape_str(ov.shape()));

    for (auto& n : nodes_) {
        n.grad = Tensor();
    }
    auto& root = nodes_[out.id];
    if (!root.requires_grad) {
        return;
    }
    root.grad = Tensor({1}, 1.0);

    std::vector<Tensor*> pgrads;
    for (std::size_t i = out.id + 1; i-- > 0;) {
        auto& n = nodes_[i];
        if (!n.requires_grad || n.grad.empty() || !n.backward) {
            continue;
        }
        pgrads.clear();
        for (auto pid : n.parents) {
            auto& p = nodes_[pid];
            if (!p.requires_grad) {
                pgrads.push_back(nullptr);
                continue;
            }
            if (p.grad.empty()) {
                p.grad = Tensor(p.value.shape(), 0.0);
            }
            pgrads.push_back(&p.grad);
        }
        n.backward(n.grad, pgrads);
    }
}

} // namespace occ::ad
