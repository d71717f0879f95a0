// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "occ/error.hpp"

namespace occ {

SpatialHash::SpatialHash(std::span<const Vec3> points, double cell_size) : points_(points), cell_(cell_size) {
    require(cell_size > 0.0, "spatial hash cell size must be > 0");
    lo_ = {std::numeric_limits<std::int64_t>::max(), std::numeric_limits<std::int64_t>::max(),
           std::numeric_limits<std::int64_t>::max()};
    hi_ = {std::numeric_limits<std::int64_t>::min(), std::numeric_limits<std::int64_t>::min(),
           std::numeric_limits<std::int64_t>::min()};
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto c = cell_of(points[i]);
        for (int a = 0; a < 3; ++a) {
            lo_[a] = std::min(lo_[a], c[a]);
            hi_[a] = std::max(hi_[a], c[a]);
        }
        cells_[key(c[0], c[1], c[2])].push_back(i);
    }
}

SpatialHash::Key SpatialHash::key(std::int64_t i, std::int64_t j, std::int64_t k) const {
    // 21 bits per axis, offset so negative cells map uniquely.
    constexpr std::int64_t off = 1 << 20;
    return (static_cast<Key>(i + off) << 42) | (static_cast<Key>(j + off) << 21) | static_cast<Key>(k + off);
}

std::array<std::int64_t, 3> SpatialHash::cell_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p[0] / cell_)), static_cast<std::int64_t>(std::floor(p[1] / cell_)),
            static_cast<std::int64_t>(std::floor(p[2] / cell_))};
}

void SpatialHash::radius(const Vec3& q, double r, std::vector<std::size_t>& out) const {
    out.clear();
    if (points_.empty()) return;
    const double r2 = r * r;
    const auto a = cell_of({q[0] - r, q[1] - r, q[2] - r});
    const auto b = cell_of({q[0] + r, q[1] + r, q[2] + r});
    for (std::int64_t i = std::max(a[0], lo_[0]); i <= std::min(b[0], hi_[0]); ++i) {
        for (std::int64_t j = std::max(a[1], lo_[1]); j <= std::min(b[1], hi_[1]); ++j) {
            for (std::int64_t k = std::max(a[2], lo_[2]); k <= std::min(b[2], hi_[2]); ++k) {
                auto it = cells_.find(key(i, j, k));
                if (it == cells_.end()) continue;
                for (auto idx : it->second) {
                    if (dist2(points_[idx], q) <= r2) out.push_back(idx);
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
}

std::vector<std::size_t> SpatialHash::radius(const Vec3& q, double r) const {
    std::vector<std::size_t> out;
    radius(q, r, out);
    return out;
}

std::vector<std::size_t> SpatialHash::knn(const Vec3& q, std::size_t k) const {
    std::vector<std::pair<double, std::size_t>> best;
    if (k == 0 || points_.empty()) return {};
    const auto c = cell_of(q);
    std::int64_t max_ring = 0;
    for (int a = 0; a < 3; ++a) {
        max_ring = std::max({max_ring, std::abs(c[a] - lo_[a]), std::abs(hi_[a] - c[a])});
    }
    auto visit = [&](std::int64_t i, std::int64_t j, std::int64_t l) {
        auto it = cells_.find(key(i, j, l));
        if (it == cells_.end()) return;
        for (auto idx : it->second) best.emplace_back(dist2(points_[idx], q), idx);
    };
    for (std::int64_t ring = 0; ring <= max_ring; ++ring) {
        // Shell of cells at Chebyshev distance `ring` from q's cell.
        for (std::int64_t i = c[0] - ring; i <= c[0] + ring; ++i) {
            for (std::int64_t j = c[1] - ring; j <= c[1] + ring; ++j) {
                const bool face = std::abs(i - c[0]) == ring || std::abs(j - c[1]) == ring;
                if (face) {
                    for (std::int64_t l = c[2] - ring; l <= c[2] + ring; ++l) visit(i, j, l);
                } else {
                    visit(i, j, c[2] - ring);
                    if (ring > 0) visit(i, j, c[2] + ring);
                }
            }
        }
        if (best.size() >= k) {
            std::nth_element(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(k - 1), best.end());
            // Anything outside the searched cube is at least ring * cell away.
            const double reach = static_cast<double>(ring) * cell_;
            if (best[k - 1].first <= reach * reach) break;
        }
    }
    std::sort(best.begin(), best.end());
    if (best.size() > k) best.resize(k);
    std::vector<std::size_t> out(best.size());
    for (std::size_t i = 0; i < best.size(); ++i) out[i] = best[i].second;
    return out;
}

KdTree::KdTree(std::span<const Vec3> points) : points_(points) {
    require(points.size() < (1ULL << 31), "kd-tree: too many points");
    order_.resize(points.size());
    for (std::uint32_t i = 0; i < order_.size(); ++i) order_[i] = i;
    if (!points.empty()) build(0, static_cast<std::uint32_t>(points.size()), 0);
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end, int depth) {
    constexpr std::uint32_t leaf_size = 8;
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back({begin, end});
    if (end - begin <= leaf_size) return id;
    // Split the widest axis at the median.
    Vec3 lo = points_[order_[begin]], hi = lo;
    for (auto i = begin; i < end; ++i) {
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], points_[order_[i]][a]);
            hi[a] = std::max(hi[a], points_[order_[i]][a]);
        }
    }
    int axis = 0;
    for (int a = 1; a < 3; ++a) {
        if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    }
    const auto mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t x, std::uint32_t y) { return points_[x][axis] < points_[y][axis]; });
    nodes_[static_cast<std::size_t>(id)].axis = axis;
    nodes_[static_cast<std::size_t>(id)].split = points_[order_[mid]][axis];
    (void)depth;
    const auto l = build(begin, mid, depth + 1);
    const auto r = build(mid, end, depth + 1);
    nodes_[static_cast<std::size_t>(id)].left = l;
    nodes_[static_cast<std::size_t>(id)].right = r;
    return id;
}

std::vector<std::size_t> KdTree::knn(const Vec3& q, std::size_t k) const {
    if (k == 0 || points_.empty()) return {};
    k = std::min(k, points_.size());
    // Max-heap on (distance, index) holding the best k so far.
    std::vector<std::pair<double, std::size_t>> heap;
    heap.reserve(k + 1);
    auto worse = [&]() { return heap.size() < k ? std::numeric_limits<double>::infinity() : heap.front().first; };
    auto consider = [&](double d, std::size_t idx) {
        const std::pair<double, std::size_t> cand{d, idx};
        if (heap.size() < k) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end());
        } else if (cand < heap.front()) {
            std::pop_heap(heap.begin(), heap.end());
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end());
        }
    };
    auto visit = [&](auto&& self, std::int32_t id) -> void {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.left < 0) {
            for (auto i = n.begin; i < n.end; ++i) consider(dist2(points_[order_[i]], q), order_[i]);
            return;
        }
        const double diff = q[n.axis] - n.split;
        const auto near = diff < 0 ? n.left : n.right;
        const auto far = diff < 0 ? n.right : n.left;
        self(self, near);
        // Points equal to the split value may sit on either side, hence <=.
        if (diff * diff <= worse()) self(self, far);
    };
    visit(visit, 0);
    std::sort_heap(heap.begin(), heap.end());
    std::vector<std::size_t> out(heap.size());
    for (std::size_t i = 0; i < heap.size(); ++i) out[i] = heap[i].second;
    return out;
}

namespace {
double mean_nn(std::span<const Vec3> from, std::span<const Vec3> to) {
    KdTree index(to);
    std::vector<double> d(from.size());
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < from.size(); ++i) {
        const auto nn = index.knn(from[i], 1);
        d[i] = std::sqrt(dist2(from[i], to[nn[0]]));
    }
    double total = 0.0;
    for (double v : d) total += v;
    return total / static_cast<double>(from.size());
}
} // namespace

double chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
    require(!a.empty() && !b.empty(), "chamfer: both point sets must be nonempty");
    return mean_nn(a, b) + mean_nn(b, a);
}

} // namespace occ
