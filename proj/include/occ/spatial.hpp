// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "occ/geom.hpp"

namespace occ {

/// Uniform hash grid over a fixed point set. Indices refer to the input span,
/// which must outlive the index.
class SpatialHash {
  public:
    SpatialHash(std::span<const Vec3> points, double cell_size);

    /// Indices of points with |p - q| <= r, ascending.
    void radius(const Vec3& q, double r, std::vector<std::size_t>& out) const;
    std::vector<std::size_t> radius(const Vec3& q, double r) const;

    /// Up to k nearest points ordered by (distance, index).
    std::vector<std::size_t> knn(const Vec3& q, std::size_t k) const;

    std::size_t size() const { return points_.size(); }
    double cell_size() const { return cell_; }

  private:
    using Key = std::uint64_t;
    Key key(std::int64_t i, std::int64_t j, std::int64_t k) const;
    std::array<std::int64_t, 3> cell_of(const Vec3& p) const;

    std::span<const Vec3> points_;
    double cell_;
    std::array<std::int64_t, 3> lo_{}, hi_{};
    std::unordered_map<Key, std::vector<std::size_t>> cells_;
};

/// Static 3-d tree for nearest-neighbor queries on sparse or unevenly spread clouds.
class KdTree {
  public:
    explicit KdTree(std::span<const Vec3> points);

    /// Up to k nearest points ordered by (distance, index).
    std::vector<std::size_t> knn(const Vec3& q, std::size_t k) const;
    std::size_t size() const { return points_.size(); }

  private:
    struct Node {
        std::uint32_t begin, end;  // range in order_
        std::int32_t left = -1, right = -1;
        int axis = 0;
        double split = 0.0;
    };
    std::int32_t build(std::uint32_t begin, std::uint32_t end, int depth);

    std::span<const Vec3> points_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

/// Symmetric Chamfer distance: mean nearest-neighbor distance from a to b plus from b to a.
/// Either set empty -> ContractError.
double chamfer(std::span<const Vec3> a, std::span<const Vec3> b);

} // namespace occ
