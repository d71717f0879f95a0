// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/grid.hpp"

#include <cmath>
#include <string>

#include "occ/error.hpp"

namespace occ {

void GridSpec::validate() const {
    require(voxel_size > 0.0, "grid voxel_size must be > 0");
    for (int d : dims) {
        require(d >= 1, "grid dims must be >= 1");
    }
    for (double o : origin) {
        require(std::isfinite(o), "grid origin must be finite");
    }
}

std::array<int, 3> GridSpec::coords(std::size_t flat) const {
    const auto z = static_cast<std::size_t>(dims[2]);
    const auto y = static_cast<std::size_t>(dims[1]);
    return {static_cast<int>(flat / (y * z)), static_cast<int>((flat / z) % y), static_cast<int>(flat % z)};
}

Vec3 GridSpec::center(std::size_t flat) const {
    const auto c = coords(flat);
    return center(c[0], c[1], c[2]);
}

std::array<int, 3> GridSpec::cell_of(const Vec3& p) const {
    return {static_cast<int>(std::floor((p[0] - origin[0]) / voxel_size)),
            static_cast<int>(std::floor((p[1] - origin[1]) / voxel_size)),
            static_cast<int>(std::floor((p[2] - origin[2]) / voxel_size))};
}

OccupancyGrid OccupancyGrid::make_labels(const GridSpec& spec, int num_classes) {
    spec.validate();
    require(num_classes >= 2 && num_classes <= 256, "num_classes must be in [2, 256]");
    OccupancyGrid g;
    g.spec = spec;
    g.num_classes = num_classes;
    g.mode = Mode::Labels;
    g.labels.assign(spec.num_voxels(), 0);
    return g;
}

OccupancyGrid OccupancyGrid::make_logits(const GridSpec& spec, int num_classes) {
    spec.validate();
    require(num_classes >= 2 && num_classes <= 256, "num_classes must be in [2, 256]");
    OccupancyGrid g;
    g.spec = spec;
    g.num_classes = num_classes;
    g.mode = Mode::Logits;
    g.logits.assign(spec.num_voxels() * static_cast<std::size_t>(num_classes), 0.0);
    return g;
}

std::vector<std::uint8_t> OccupancyGrid::to_labels() const {
    if (mode == Mode::Labels) {
        return labels;
    }
    const auto c = static_cast<std::size_t>(num_classes);
    std::vector<std::uint8_t> out(spec.num_voxels());
    for (std::size_t v = 0; v < out.size(); ++v) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < c; ++k) {
            if (logits[v * c + k] > logits[v * c + best]) {
                best = k;
            }
        }
        out[v] = static_cast<std::uint8_t>(best);
    }
    return out;
}

void OccupancyGrid::validate() const {
    spec.validate();
    if (mode == Mode::Labels) {
        require(labels.size() == spec.num_voxels(), "label count does not match grid");
        for (auto l : labels) {
            require(l < num_classes, "label " + std::to_string(l) + " out of range");
        }
    } else {
        require(logits.size() == spec.num_voxels() * static_cast<std::size_t>(num_classes),
                "logit count does not match grid");
        for (double v : logits) {
            if (!std::isfinite(v)) {
                throw NumericError("non-finite occupancy logit");
            }
        }
    }
}

} // namespace occ
