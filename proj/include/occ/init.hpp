// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "occ/geom.hpp"
#include "occ/rng.hpp"
#include "occ/splat.hpp"

namespace occ::init {

struct InitConfig {
    int num_gaussians = 512;
    double density_fraction = 0.7;
    double suppress_radius = 0.5;  // R_d, meters
    double scale_lo = 0.2;
    double scale_hi = 1.0;
    int num_classes = 6;
    std::uint64_t seed = 0;

    void validate() const;
};

struct DensitySelection {
    std::vector<std::size_t> centers;  // point indices, in selection order
    std::vector<std::uint8_t> removed; // 1 for selected or suppressed points
};

/// Greedy density peaks. Each round picks the remaining point with the most
/// remaining neighbors within R_d (lowest index on ties), then drops it and its
/// R_d-neighbors from candidacy. Stops after max_centers or when no candidates remain.
DensitySelection density_select(std::span<const Vec3> points, double suppress_radius, std::size_t max_centers);

/// Same contract, recomputing every count from scratch each round; O(n^2) per round.
DensitySelection density_select_reference(std::span<const Vec3> points, double suppress_radius,
                                          std::size_t max_centers);

/// `count` indices into [0, pool_size): without replacement when count <= pool_size,
/// with replacement otherwise.
std::vector<std::size_t> random_coverage(std::size_t pool_size, std::size_t count, Rng& rng);

struct InitResult {
    splat::GaussianSet gaussians;
    std::size_t num_density = 0;
    std::size_t num_random = 0;
};

/// Density centers for floor(density_fraction * N_G) slots, then random coverage
/// of the remaining slots from points neither selected nor suppressed. The
/// random count is capped by that pool so no center repeats.
InitResult init_gaussians(std::span<const Vec3> points, const InitConfig& cfg);

} // namespace occ::init
