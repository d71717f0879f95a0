// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "occ/tensor.hpp"

namespace occ::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::uint32_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const;
    std::size_t numel() const;
};

/// Adjoint of one node. `parent_grads[i]` is null when parent i needs no gradient.
using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> parent_grads)>;

/// Append-only record of a computation. Parents of node i always have ids < i.
/// A tape has a single writer; independent tapes may be used from separate threads.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value);
    Var constant(Tensor value);
    Var record(std::string_view kind, Tensor value, std::vector<Var> parents, BackwardFn backward);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::string_view kind(Var v) const { return nodes_.at(v.id).kind; }
    std::size_t size() const { return nodes_.size(); }

    /// Gradient accumulated by the last backward pass; zeros when the node is off every path.
    Tensor grad(Var v) const;

    /// Resets all accumulators, seeds d(out)/d(out) = 1 and runs the adjoints in reverse.
    /// Calling it twice yields identical gradients.
    void backward(Var scalar_output);

  private:
    struct Node {
        std::string_view kind;
        Tensor value;
        Tensor grad;
        std::vector<std::uint32_t> parents;
        BackwardFn backward;
        bool requires_grad = false;
    };
    std::vector<Node> nodes_;
};

inline void backward(Tape& tape, Var scalar_output) { tape.backward(scalar_output); }

} // namespace occ::ad
