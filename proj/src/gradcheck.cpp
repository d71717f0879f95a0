// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "occ/error.hpp"

namespace occ::ad {

namespace {
double eval_at(const ScalarFn& fn, const Tensor& x) {
    Tape tape;
    Var in = tape.constant(x);
    return fn(tape, in).value().item();
}
} // namespace

GradcheckResult gradcheck(const ScalarFn& fn, const Tensor& point, double h) {
    require(h > 0.0, "gradcheck: step must be positive");
    Tape tape;
    Var x = tape.leaf(point);
    Var y = fn(tape, x);
    tape.backward(y);
    const Tensor analytic = tape.grad(x);

    GradcheckResult res;
    double max_abs = 0.0, scale = 0.0;
    Tensor probe = point;
    for (std::size_t i = 0; i < point.numel(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = eval_at(fn, probe);
        probe[i] = orig - h;
        const double fm = eval_at(fn, probe);
        probe[i] = orig;
        const double num = (fp - fm) / (2.0 * h);
        const double ana = analytic[i];
        if (std::isnan(num) || std::isnan(ana)) {
            throw NumericError("gradcheck: NaN at component " + std::to_string(i));
        }
        const double denom = std::max({std::abs(ana), std::abs(num), 1e-8});
        const double err = std::abs(ana - num) / denom;
        max_abs = std::max(max_abs, std::abs(ana - num));
        scale = std::max({scale, std::abs(ana), std::abs(num)});
        if (err > res.max_rel_error || i == 0) {
            res = {err, i, ana, num};
        }
    }
    res.max_abs_error = max_abs;
    res.scale = scale;
    return res;
}

} // namespace occ::ad
