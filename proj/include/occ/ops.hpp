// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "occ/tape.hpp"

// Differentiable primitives. Binary elementwise ops accept equal shapes, a second
// operand whose shape is a suffix of the first (leading-axis expansion), or a
// single-element operand. Any other mismatch throws ContractError.
namespace occ::ad {

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);

Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var softplus(Var a);
/// tanh approximation.
Var gelu(Var a);

Var softmax(Var a);
/// Rows with norm below 1e-12 map to zero with zero gradient.
Var l2_normalize(Var a);

Var sum(Var a);
Var mean(Var a);
Var sum_last(Var a);

Var concat(const std::vector<Var>& parts);
Var slice(Var a, std::size_t begin, std::size_t end);
Var reshape(Var a, Shape shape);
/// Repeats a size-1 axis `n` times.
Var expand(Var a, std::size_t axis, std::size_t n);

/// [..., K] x [K, N] -> [..., N]
Var matmul(Var a, Var b);
/// [B, m, k] x [B, k, n] -> [B, m, n]
Var bmm(Var a, Var b);

/// Rows of `a` (first axis) picked by index; -1 yields a zero row.
Var gather_rows(Var a, std::vector<std::int64_t> index);
/// out[segment[n]] += a[n] along the first axis.
Var segment_sum(Var a, const std::vector<std::uint32_t>& segment, std::size_t num_segments);
/// out[segment[n]] += u[n] (outer) x[n]; u: [N, M], x: [N, D] -> [S, M, D].
Var segment_outer(Var u, Var x, const std::vector<std::uint32_t>& segment, std::size_t num_segments);

/// Linear layer x W + b with W: [in, out], b: [out].
Var linear(Var x, Var weight, Var bias);

} // namespace occ::ad
