// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/splat.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "occ/error.hpp"

namespace occ::splat {

void GaussianSet::validate() const {
    const std::size_t n = mu.size();
    require(num_classes >= 2, "GaussianSet needs at least 2 classes");
    require(rot.size() == n && scale.size() == n && sem.size() == n * static_cast<std::size_t>(num_classes),
            "GaussianSet arrays have inconsistent lengths");
    for (std::size_t i = 0; i < n; ++i) {
        require(std::abs(rot[i].norm() - 1.0) <= 1e-9, "GaussianSet rotation is not a unit quaternion");
        for (double s : scale[i]) {
            require(s > 0.0, "GaussianSet scales must be > 0");
        }
    }
}

void GaussianSet::push_back(const Vec3& m, const Quat& q, const Vec3& s, std::span<const double> c) {
    require(c.size() == static_cast<std::size_t>(num_classes), "semantic vector length must equal num_classes");
    mu.push_back(m);
    rot.push_back(q);
    scale.push_back(s);
    sem.insert(sem.end(), c.begin(), c.end());
}

GaussianSet GaussianSet::permuted(std::span<const std::size_t> order) const {
    GaussianSet out;
    out.num_classes = num_classes;
    const auto c = static_cast<std::size_t>(num_classes);
    for (auto i : order) {
        out.push_back(mu.at(i), rot.at(i), scale.at(i), std::span<const double>(sem).subspan(i * c, c));
    }
    return out;
}

Mat3 covariance(const Quat& q, const Vec3& s) {
    require(s[0] > 0.0 && s[1] > 0.0 && s[2] > 0.0, "covariance: scales must be > 0");
    const Mat3 r = quat_to_rot(q);
    Mat3 rs{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rs[i][j] = r[i][j] * s[static_cast<std::size_t>(j)];
    return mat_mul(rs, transpose(rs));
}

std::vector<double> gaussian_contribution(const Vec3& x, const GaussianSet& set, std::size_t g) {
    const Mat3 r = quat_to_rot(set.rot.at(g));
    const Vec3& s = set.scale[g];
    require(s[0] > 0.0 && s[1] > 0.0 && s[2] > 0.0, "gaussian_contribution: scales must be > 0");
    // Sigma^-1 = R S^-2 R^T, so the Mahalanobis term is |S^-1 R^T (x - mu)|^2.
    const Vec3 y = mat_t_vec(r, x - set.mu[g]);
    double d = 0.0;
    for (int k = 0; k < 3; ++k) {
        d += y[static_cast<std::size_t>(k)] * y[static_cast<std::size_t>(k)] / (s[static_cast<std::size_t>(k)] * s[static_cast<std::size_t>(k)]);
    }
    const double w = std::exp(-0.5 * d);
    const auto c = static_cast<std::size_t>(set.num_classes);
    std::vector<double> out(c);
    for (std::size_t k = 0; k < c; ++k) {
        out[k] = w * set.sem[g * c + k];
    }
    return out;
}

namespace {

// Per-Gaussian quantities shared by forward and backward passes.
struct Prepared {
    Vec3 mu;
    Mat3 rot;
    Vec3 inv_s2;
    std::array<double, 6> prec;  // upper triangle of R S^-2 R^T: xx xy xz yy yz zz
    double radius;
};

struct Kernel {
    static constexpr std::size_t kMaxClasses = 256;
    const GridSpec& grid;
    std::size_t n = 0;
    std::size_t c = 0;
    std::span<const double> mu, log_scale, rot, sem;
    std::vector<Prepared> prep;

    Kernel(const GridSpec& g, std::span<const double> m, std::span<const double> ls, std::span<const double> r,
           std::span<const double> s, std::size_t classes, double radius_multiplier)
        : grid(g), n(m.size() / 3), c(classes), mu(m), log_scale(ls), rot(r), sem(s) {
        require(classes <= kMaxClasses, "splat: at most 256 classes");
        require(ls.size() == n * 3 && r.size() == n * 4 && s.size() == n * c,
                "splat: inconsistent Gaussian tensor sizes");
        prep.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            auto& p = prep[i];
            p.mu = {m[3 * i], m[3 * i + 1], m[3 * i + 2]};
            p.rot = quat_to_rot(Quat{r[4 * i], r[4 * i + 1], r[4 * i + 2], r[4 * i + 3]});
            double smax = 0.0;
            for (std::size_t k = 0; k < 3; ++k) {
                p.inv_s2[k] = std::exp(-2.0 * ls[3 * i + k]);
                smax = std::max(smax, std::exp(ls[3 * i + k]));
            }
            p.radius = radius_multiplier * smax;
            Mat3 a{};
            for (std::size_t r0 = 0; r0 < 3; ++r0)
                for (std::size_t r1 = 0; r1 < 3; ++r1)
                    for (std::size_t k = 0; k < 3; ++k) a[r0][r1] += p.rot[r0][k] * p.inv_s2[k] * p.rot[r1][k];
            p.prec = {a[0][0], a[0][1], a[0][2], a[1][1], a[1][2], a[2][2]};
        }
    }

    // Inclusive voxel index range along `axis` whose centers may lie within r of x.
    std::pair<int, int> axis_range(int axis, double x, double r) const {
        const auto a = static_cast<std::size_t>(axis);
        const double lo = (x - r - grid.origin[a]) / grid.voxel_size - 0.5;
        const double hi = (x + r - grid.origin[a]) / grid.voxel_size - 0.5;
        const int ilo = std::max(0, static_cast<int>(std::ceil(std::max(lo, -1.0))));
        const int ihi = std::min(grid.dims[a] - 1, static_cast<int>(std::floor(std::min(hi, 1e9))));
        return {ilo, ihi};
    }

    // Calls f(voxel, delta, weight) for the voxels of slab x = `slab` reached by Gaussian g; all slabs when slab < 0.
    template <typename F>
    void for_each_voxel_in_reach(std::size_t g, F&& f, int slab = -1) const {
        const auto& p = prep[g];
        auto [i0, i1] = axis_range(0, p.mu[0], p.radius);
        if (slab >= 0) {
            if (slab < i0 || slab > i1) return;
            i0 = i1 = slab;
        }
        const auto [j0, j1] = axis_range(1, p.mu[1], p.radius);
        const auto [k0, k1] = axis_range(2, p.mu[2], p.radius);
        const double r2 = p.radius * p.radius;
        const auto& a = p.prec;
        for (int i = i0; i <= i1; ++i) {
            const double dx = grid.origin[0] + (i + 0.5) * grid.voxel_size - p.mu[0];
            for (int j = j0; j <= j1; ++j) {
                const double dy = grid.origin[1] + (j + 0.5) * grid.voxel_size - p.mu[1];
                const double dxy2 = dx * dx + dy * dy;
                if (dxy2 > r2) continue;
                const double q0 = a[0] * dx * dx + a[3] * dy * dy + 2.0 * a[1] * dx * dy;
                const double lin = 2.0 * (a[2] * dx + a[4] * dy);
                const std::size_t row = grid.index(i, j, 0);
                for (int k = k0; k <= k1; ++k) {
                    const double dz = grid.origin[2] + (k + 0.5) * grid.voxel_size - p.mu[2];
                    if (dxy2 + dz * dz > r2) continue;
                    const double w = std::exp(-0.5 * (q0 + dz * (lin + a[5] * dz)));
                    f(row + static_cast<std::size_t>(k), Vec3{dx, dy, dz}, w);
                }
            }
        }
    }

    // Each x-slab adds its Gaussians in ascending order, so every voxel sums in the same order for any thread count.
    void forward(std::span<double> out, double empty_prior) const {
        const std::size_t nv = grid.num_voxels();
        for (std::size_t v = 0; v < nv; ++v) out[v * c] += empty_prior;
        const int slabs = grid.dims[0];
#pragma omp parallel for schedule(dynamic, 1)
        for (int i = 0; i < slabs; ++i) {
            for (std::size_t g = 0; g < n; ++g) {
                const double* sg = &sem[g * c];
                for_each_voxel_in_reach(
                    g,
                    [&](std::size_t v, const Vec3&, double w) {
                        double* row = &out[v * c];
                        for (std::size_t k = 0; k < c; ++k) row[k] += w * sg[k];
                    },
                    i);
            }
        }
    }

    void backward(std::span<const double> gout, double* dmu, double* dls, double* drot, double* dsem) const {
        const auto ng = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(dynamic, 8)
        for (std::ptrdiff_t gi = 0; gi < ng; ++gi) {
            const auto g = static_cast<std::size_t>(gi);
            std::array<double, kMaxClasses> dsem_local;
            std::fill_n(dsem_local.begin(), c, 0.0);
            const auto& p = prep[g];
            // First and second moments of the voxel offsets weighted by dL/dd.
            Vec3 m1{0, 0, 0};
            std::array<double, 6> m2{};
            const double* sg = &sem[g * c];
            for_each_voxel_in_reach(g, [&](std::size_t v, const Vec3& delta, double w) {
                const double* gv = &gout[v * c];
                double gw = 0.0;
                for (std::size_t k = 0; k < c; ++k) gw += gv[k] * sg[k];
                for (std::size_t k = 0; k < c; ++k) dsem_local[k] += w * gv[k];
                const double dd = -0.5 * w * gw;
                for (std::size_t k = 0; k < 3; ++k) m1[k] += dd * delta[k];
                m2[0] += dd * delta[0] * delta[0];
                m2[1] += dd * delta[0] * delta[1];
                m2[2] += dd * delta[0] * delta[2];
                m2[3] += dd * delta[1] * delta[1];
                m2[4] += dd * delta[1] * delta[2];
                m2[5] += dd * delta[2] * delta[2];
            });
            if (dsem) {
                for (std::size_t k = 0; k < c; ++k) dsem[g * c + k] += dsem_local[k];
            }
            const auto& a = p.prec;
            const Mat3 prec{{{a[0], a[1], a[2]}, {a[1], a[3], a[4]}, {a[2], a[4], a[5]}}};
            const Mat3 mom{{{m2[0], m2[1], m2[2]}, {m2[1], m2[3], m2[4]}, {m2[2], m2[4], m2[5]}}};
            const Vec3 pm = mat_vec(prec, m1);
            const Mat3 mr = mat_mul(mom, p.rot);
            Mat3 grot{};
            for (std::size_t i = 0; i < 3; ++i)
                for (std::size_t k = 0; k < 3; ++k) grot[i][k] = 2.0 * p.inv_s2[k] * mr[i][k];
            for (std::size_t k = 0; k < 3; ++k) {
                double rmr = 0.0;
                for (std::size_t i = 0; i < 3; ++i) rmr += p.rot[i][k] * mr[i][k];
                if (dmu) dmu[3 * g + k] += -2.0 * pm[k];
                if (dls) dls[3 * g + k] += -2.0 * p.inv_s2[k] * rmr;
            }
            if (drot) {
                const auto dq = quat_to_rot_vjp(Quat{rot[4 * g], rot[4 * g + 1], rot[4 * g + 2], rot[4 * g + 3]}, grot);
                for (std::size_t k = 0; k < 4; ++k) drot[4 * g + k] += dq[k];
            }
        }
    }
};

std::vector<double> flatten_log_scales(const GaussianSet& set) {
    std::vector<double> out(set.size() * 3);
    for (std::size_t i = 0; i < set.size(); ++i)
        for (std::size_t k = 0; k < 3; ++k) out[3 * i + k] = std::log(set.scale[i][k]);
    return out;
}

} // namespace

GaussianTensors to_tensors(const GaussianSet& set) {
    set.validate();
    const std::size_t n = std::max<std::size_t>(set.size(), 1);
    const auto c = static_cast<std::size_t>(set.num_classes);
    GaussianTensors t{ad::Tensor({n, 3}), ad::Tensor({n, 3}), ad::Tensor({n, 4}), ad::Tensor({n, c})};
    require(set.size() > 0, "to_tensors: empty GaussianSet");
    const auto ls = flatten_log_scales(set);
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (std::size_t k = 0; k < 3; ++k) {
            t.mu[3 * i + k] = set.mu[i][k];
            t.log_scale[3 * i + k] = ls[3 * i + k];
        }
        const auto& q = set.rot[i];
        t.rot[4 * i] = q.w;
        t.rot[4 * i + 1] = q.x;
        t.rot[4 * i + 2] = q.y;
        t.rot[4 * i + 3] = q.z;
    }
    std::copy(set.sem.begin(), set.sem.end(), t.sem.vec().begin());
    return t;
}

GaussianSet from_tensors(const ad::Tensor& mu, const ad::Tensor& log_scale, const ad::Tensor& rot,
                         const ad::Tensor& sem) {
    const std::size_t n = mu.dim(0);
    require(log_scale.dim(0) == n && rot.dim(0) == n && sem.dim(0) == n, "from_tensors: row counts differ");
    GaussianSet set;
    set.num_classes = static_cast<int>(sem.dim(1));
    const auto c = sem.dim(1);
    for (std::size_t i = 0; i < n; ++i) {
        const Quat q = Quat{rot[4 * i], rot[4 * i + 1], rot[4 * i + 2], rot[4 * i + 3]}.normalized();
        set.push_back({mu[3 * i], mu[3 * i + 1], mu[3 * i + 2]}, q,
                      {std::exp(log_scale[3 * i]), std::exp(log_scale[3 * i + 1]), std::exp(log_scale[3 * i + 2])},
                      std::span<const double>(sem.data()).subspan(i * c, c));
    }
    return set;
}

OccupancyGrid splat_occupancy(const GaussianSet& set, const GridSpec& grid, const SplatOptions& opts) {
    set.validate();
    require(opts.radius_multiplier > 0.0, "splat: radius_multiplier must be > 0");
    auto out = OccupancyGrid::make_logits(grid, set.num_classes);
    const auto ls = flatten_log_scales(set);
    std::vector<double> mu(set.size() * 3), rot(set.size() * 4);
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (std::size_t k = 0; k < 3; ++k) mu[3 * i + k] = set.mu[i][k];
        rot[4 * i] = set.rot[i].w;
        rot[4 * i + 1] = set.rot[i].x;
        rot[4 * i + 2] = set.rot[i].y;
        rot[4 * i + 3] = set.rot[i].z;
    }
    Kernel k(grid, mu, ls, rot, set.sem, static_cast<std::size_t>(set.num_classes), opts.radius_multiplier);
    k.forward(out.logits, opts.empty_prior);
    return out;
}

OccupancyGrid brute_force_occupancy(const GaussianSet& set, const GridSpec& grid, double empty_prior) {
    set.validate();
    auto out = OccupancyGrid::make_logits(grid, set.num_classes);
    const auto c = static_cast<std::size_t>(set.num_classes);
    for (std::size_t v = 0; v < grid.num_voxels(); ++v) {
        const Vec3 x = grid.center(v);
        out.logits[v * c] += empty_prior;
        for (std::size_t g = 0; g < set.size(); ++g) {
            const auto contrib = gaussian_contribution(x, set, g);
            for (std::size_t k = 0; k < c; ++k) {
                out.logits[v * c + k] += contrib[k];
            }
        }
    }
    return out;
}

ad::Var splat(ad::Var mu, ad::Var log_scale, ad::Var rot, ad::Var sem, const GridSpec& grid, const SplatOptions& opts) {
    grid.validate();
    require(opts.radius_multiplier > 0.0, "splat: radius_multiplier must be > 0");
    require(mu.shape().size() == 2 && mu.shape()[1] == 3, "splat: mu must be [N, 3]");
    require(log_scale.shape() == mu.shape(), "splat: log_scale must be [N, 3]");
    require(rot.shape() == ad::Shape({mu.shape()[0], 4}), "splat: rot must be [N, 4]");
    require(sem.shape().size() == 2 && sem.shape()[0] == mu.shape()[0], "splat: sem must be [N, C]");
    const std::size_t c = sem.shape()[1];
    ad::Tensor out({grid.num_voxels(), c});
    {
        Kernel k(grid, mu.value().data(), log_scale.value().data(), rot.value().data(), sem.value().data(), c,
                 opts.radius_multiplier);
        k.forward(out.data(), opts.empty_prior);
    }
    const double mult = opts.radius_multiplier;
    return mu.tape->record(
        "splat", std::move(out), {mu, log_scale, rot, sem},
        [mu, log_scale, rot, sem, grid, c, mult](const ad::Tensor& g, std::span<ad::Tensor* const> pg) {
            Kernel k(grid, mu.value().data(), log_scale.value().data(), rot.value().data(), sem.value().data(), c,
                     mult);
            auto ptr = [](ad::Tensor* t) { return t ? t->data().data() : nullptr; };
            k.backward(g.data(), ptr(pg[0]), ptr(pg[1]), ptr(pg[2]), ptr(pg[3]));
        });
}

} // namespace occ::splat
