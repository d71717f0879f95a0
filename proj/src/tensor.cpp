// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "occ/error.hpp"

namespace occ::ad {

std::size_t numel_of(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) {
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? ", " : "") << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {
void check_shape(const Shape& shape) {
    require(!shape.empty(), "tensor shape must have at least one axis");
    for (auto d : shape) {
        require(d >= 1, "tensor dims must be >= 1, got " + shape_str(shape));
    }
}
} // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(numel_of(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    require(numel_of(shape_) == data_.size(),
            "shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) + " values");
}

double Tensor::item() const {
    require(data_.size() == 1, "item() needs a single-element tensor, got " + shape_str(shape_));
    return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

} // namespace occ::ad
