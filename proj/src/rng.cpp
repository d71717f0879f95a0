// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/rng.hpp"

#include <cmath>
#include <numbers>

#include "occ/error.hpp"

namespace occ {

Rng Rng::split(std::string_view tag) const {
    // FNV-1a over the tag, folded into this stream's key.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
    }
    Rng child;
    child.key_ = mix(key_ ^ mix(h));
    return child;
}

Rng Rng::split(std::uint64_t index) const {
    Rng child;
    child.key_ = mix(key_ ^ mix(index + 0x243f6a8885a308d3ULL));
    return child;
}

std::uint64_t Rng::below(std::uint64_t n) {
    require(n > 0, "Rng::below needs n > 0");
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = max() - max() % n;
    std::uint64_t v;
    do {
        v = (*this)();
    } while (v >= limit);
    return v % n;
}

double Rng::normal() {
    double u1 = uniform();
    while (u1 <= 0.0) {
        u1 = uniform();
    }
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

} // namespace occ
