// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/init.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "occ/error.hpp"
#include "occ/spatial.hpp"

namespace occ::init {

void InitConfig::validate() const {
    require(num_gaussians >= 1, "init: N_G must be >= 1");
    require(density_fraction >= 0.0 && density_fraction <= 1.0, "init: density_fraction must be in [0, 1]");
    require(suppress_radius > 0.0, "init: R_d must be > 0");
    require(scale_lo > 0.0 && scale_hi >= scale_lo, "init: scale range must satisfy 0 < lo <= hi");
    require(num_classes >= 2 && num_classes <= 256, "init: num_classes must be in [2, 256]");
}

DensitySelection density_select(std::span<const Vec3> points, double suppress_radius, std::size_t max_centers) {
    require(suppress_radius > 0.0, "density_select: R_d must be > 0");
    const std::size_t n = points.size();
    DensitySelection out;
    out.removed.assign(n, 0);
    if (n == 0 || max_centers == 0) return out;

    SpatialHash index(points, suppress_radius);
    std::vector<std::vector<std::size_t>> nbrs(n);
#pragma omp parallel for schedule(dynamic, 64)
    for (std::size_t i = 0; i < n; ++i) {
        index.radius(points[i], suppress_radius, nbrs[i]);
    }

    // Ordered by (-count, index): begin() is the densest remaining point.
    std::vector<long> count(n);
    std::set<std::pair<long, std::size_t>> queue;
    for (std::size_t i = 0; i < n; ++i) {
        count[i] = static_cast<long>(nbrs[i].size());
        queue.emplace(-count[i], i);
    }
    auto drop = [&](std::size_t j) {
        queue.erase({-count[j], j});
        out.removed[j] = 1;
        for (auto m : nbrs[j]) {
            if (out.removed[m]) continue;
            queue.erase({-count[m], m});
            --count[m];
            queue.emplace(-count[m], m);
        }
    };
    while (!queue.empty() && out.centers.size() < max_centers) {
        const std::size_t c = queue.begin()->second;
        out.centers.push_back(c);
        drop(c);
        for (auto m : nbrs[c]) {
            if (!out.removed[m]) drop(m);
        }
    }
    return out;
}

DensitySelection density_select_reference(std::span<const Vec3> points, double suppress_radius,
                                          std::size_t max_centers) {
    require(suppress_radius > 0.0, "density_select: R_d must be > 0");
    const std::size_t n = points.size();
    const double r2 = suppress_radius * suppress_radius;
    DensitySelection out;
    out.removed.assign(n, 0);
    while (out.centers.size() < max_centers) {
        long best = -1;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (out.removed[i]) continue;
            long c = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (!out.removed[j] && dist2(points[i], points[j]) <= r2) ++c;
            }
            if (c > best) {
                best = c;
                arg = i;
            }
        }
        if (best < 0) break;
        out.centers.push_back(arg);
        for (std::size_t j = 0; j < n; ++j) {
            if (dist2(points[arg], points[j]) <= r2) out.removed[j] = 1;
        }
    }
    return out;
}

std::vector<std::size_t> random_coverage(std::size_t pool_size, std::size_t count, Rng& rng) {
    require(pool_size > 0 || count == 0, "random_coverage: empty pool");
    std::vector<std::size_t> out;
    out.reserve(count);
    if (count > pool_size) {
        for (std::size_t i = 0; i < count; ++i) out.push_back(static_cast<std::size_t>(rng.below(pool_size)));
        return out;
    }
    // Partial Fisher-Yates.
    std::vector<std::size_t> idx(pool_size);
    for (std::size_t i = 0; i < pool_size; ++i) idx[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(pool_size - i));
        std::swap(idx[i], idx[j]);
        out.push_back(idx[i]);
    }
    return out;
}

InitResult init_gaussians(std::span<const Vec3> points, const InitConfig& cfg) {
    cfg.validate();
    require(!points.empty(), "init_gaussians: empty point cloud");
    const auto n_g = static_cast<std::size_t>(cfg.num_gaussians);
    const auto n_d = static_cast<std::size_t>(std::floor(cfg.density_fraction * static_cast<double>(n_g)));

    DensitySelection dens;
    if (n_d > 0) {
        dens = density_select(points, cfg.suppress_radius, n_d);
    } else {
        dens.removed.assign(points.size(), 0);
    }
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (!dens.removed[i]) pool.push_back(i);
    }
    Rng rng = Rng(cfg.seed).split("init");
    Rng pick = rng.split("coverage");
    const std::size_t n_r = std::min(n_g - dens.centers.size(), pool.size());
    const auto sampled = random_coverage(pool.size(), n_r, pick);

    InitResult res;
    res.num_density = dens.centers.size();
    res.num_random = sampled.size();
    auto& g = res.gaussians;
    g.num_classes = cfg.num_classes;
    Rng scales = rng.split("scale");
    const std::vector<double> zeros(static_cast<std::size_t>(cfg.num_classes), 0.0);
    auto add = [&](std::size_t pi) {
        Vec3 s;
        for (auto& v : s) v = scales.uniform(cfg.scale_lo, cfg.scale_hi);
        g.push_back(points[pi], Quat{}, s, zeros);
    };
    for (auto c : dens.centers) add(c);
    for (auto s : sampled) add(pool[s]);
    return res;
}

} // namespace occ::init
