// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "occ/geom.hpp"

namespace occ {

/// Axis-aligned voxel lattice. Voxel (i, j, k) spans origin + [i, i+1) * voxel_size
/// on x (likewise y, z); flat index is x-major: (i * Y + j) * Z + k.
struct GridSpec {
    Vec3 origin{-10.0, -10.0, -0.375};
    double voxel_size = 0.5;
    std::array<int, 3> dims{40, 40, 8};

    void validate() const;
    std::size_t num_voxels() const {
        return static_cast<std::size_t>(dims[0]) * static_cast<std::size_t>(dims[1]) * static_cast<std::size_t>(dims[2]);
    }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * static_cast<std::size_t>(dims[1]) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(dims[2]) +
               static_cast<std::size_t>(k);
    }
    std::array<int, 3> coords(std::size_t flat) const;
    Vec3 center(int i, int j, int k) const {
        return {origin[0] + (i + 0.5) * voxel_size, origin[1] + (j + 0.5) * voxel_size,
                origin[2] + (k + 0.5) * voxel_size};
    }
    Vec3 center(std::size_t flat) const;
    /// Integer voxel coordinate of a point (may lie outside the grid).
    std::array<int, 3> cell_of(const Vec3& p) const;
    bool inside(const std::array<int, 3>& c) const {
        return c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && c[0] < dims[0] && c[1] < dims[1] && c[2] < dims[2];
    }
    Vec3 extent_max() const {
        return {origin[0] + dims[0] * voxel_size, origin[1] + dims[1] * voxel_size, origin[2] + dims[2] * voxel_size};
    }
    bool operator==(const GridSpec&) const = default;
};

/// Dense semantic occupancy: either per-voxel labels or per-voxel class logits.
struct OccupancyGrid {
    enum class Mode : std::uint8_t { Labels = 0, Logits = 1 };

    GridSpec spec;
    int num_classes = 6;
    Mode mode = Mode::Labels;
    std::vector<std::uint8_t> labels;  // num_voxels, when mode == Labels
    std::vector<double> logits;        // num_voxels * num_classes, when mode == Logits

    static OccupancyGrid make_labels(const GridSpec& spec, int num_classes);
    static OccupancyGrid make_logits(const GridSpec& spec, int num_classes);

    /// Labels as-is, or the per-voxel argmax of the logits (lowest class on ties).
    std::vector<std::uint8_t> to_labels() const;
    void validate() const;
};

} // namespace occ
