// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>

#include "occ/tape.hpp"

namespace occ::ad {

/// Builds a scalar on `tape` from the leaf `x`.
using ScalarFn = std::function<Var(Tape& tape, Var x)>;

struct GradcheckResult {
    double max_rel_error = 0.0;  // elementwise |a - n| / max(|a|, |n|, 1e-8)
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double max_abs_error = 0.0;
    double scale = 0.0;  // max over components of max(|a|, |n|)

    /// max |a - n| / max |a|, |n| over the whole tensor.
    double tensor_rel_error() const { return scale > 0.0 ? max_abs_error / scale : 0.0; }
};

/// Max over components of |analytic - central| / max(|analytic|, |central|, 1e-8).
/// Throws NumericError if either estimate is NaN.
GradcheckResult gradcheck(const ScalarFn& fn, const Tensor& point, double h = 1e-5);

} // namespace occ::ad
