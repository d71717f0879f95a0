// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "occ/geom.hpp"
#include "occ/grid.hpp"
#include "occ/tape.hpp"

namespace occ::splat {

/// Semantic 3D Gaussians: centers, unit quaternions, positive scales and raw
/// per-class logits (row-major N x num_classes).
struct GaussianSet {
    int num_classes = 6;
    std::vector<Vec3> mu;
    std::vector<Quat> rot;
    std::vector<Vec3> scale;
    std::vector<double> sem;

    std::size_t size() const { return mu.size(); }
    void validate() const;
    void push_back(const Vec3& m, const Quat& q, const Vec3& s, std::span<const double> c);
    /// Subset/reordering by index list.
    GaussianSet permuted(std::span<const std::size_t> order) const;
};

/// Sigma = R S S^T R^T. Throws ContractError for non-positive scales or a zero quaternion.
Mat3 covariance(const Quat& q, const Vec3& s);

/// exp(-0.5 (x - mu)^T Sigma^-1 (x - mu)) * c for Gaussian `g` of the set.
std::vector<double> gaussian_contribution(const Vec3& x, const GaussianSet& set, std::size_t g);

struct SplatOptions {
    double radius_multiplier = 3.0;  // neighborhood cutoff = multiplier * max(scale)
    double empty_prior = 1.0;        // constant logit added to class 0 everywhere
};

/// Local splatting: each voxel sums the Gaussians whose center lies within
/// radius_multiplier * max(s) of the voxel center. Parallel over voxels.
OccupancyGrid splat_occupancy(const GaussianSet& set, const GridSpec& grid, const SplatOptions& opts = {});

/// Reference: every Gaussian contributes to every voxel, serial double loop.
OccupancyGrid brute_force_occupancy(const GaussianSet& set, const GridSpec& grid, double empty_prior = 1.0);

/// Differentiable local splatting. mu [N,3], log_scale [N,3], rot [N,4] (renormalized
/// internally), sem [N,C] -> logits [num_voxels, C].
ad::Var splat(ad::Var mu, ad::Var log_scale, ad::Var rot, ad::Var sem, const GridSpec& grid,
              const SplatOptions& opts = {});

/// Tensors of a set in the layout `splat` expects (scales as logs).
struct GaussianTensors {
    ad::Tensor mu, log_scale, rot, sem;
};
GaussianTensors to_tensors(const GaussianSet& set);
GaussianSet from_tensors(const ad::Tensor& mu, const ad::Tensor& log_scale, const ad::Tensor& rot,
                         const ad::Tensor& sem);

} // namespace occ::splat
