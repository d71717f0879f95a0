// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "occ/error.hpp"
#include "occ/gradcheck.hpp"
#include "occ/objectives.hpp"
#include "occ/ops.hpp"
#include "occ/rng.hpp"
#include "occ/splat.hpp"

namespace occ::splat {
namespace {

Quat random_quat(Rng& rng) {
    Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    return q.normalized();
}

GaussianSet random_set(Rng& rng, std::size_t n, const GridSpec& spec, int classes = 6) {
    GaussianSet s;
    s.num_classes = classes;
    const Vec3 hi = spec.extent_max();
    std::vector<double> c(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 m;
        for (int a = 0; a < 3; ++a) m[a] = rng.uniform(spec.origin[a], hi[a]);
        Vec3 sc{rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0)};
        for (auto& v : c) v = rng.uniform(-2.0, 2.0);
        s.push_back(m, random_quat(rng), sc, c);
    }
    return s;
}

GridSpec small_grid() {
    GridSpec g;
    g.origin = {-4.0, -4.0, -2.0};
    g.voxel_size = 0.5;
    g.dims = {16, 16, 8};
    return g;
}

TEST(QuatToRot, Identity) {
    const auto r = quat_to_rot(Quat{});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_EQ(r[i][j], i == j ? 1.0 : 0.0);
}

TEST(QuatToRot, NinetyDegreesAboutZ) {
    const double h = std::sqrt(0.5);
    const auto v = mat_vec(quat_to_rot(Quat{h, 0, 0, h}), {1, 0, 0});
    EXPECT_NEAR(v[0], 0.0, 1e-15);
    EXPECT_NEAR(v[1], 1.0, 1e-15);
    EXPECT_NEAR(v[2], 0.0, 1e-15);
}

TEST(QuatToRot, OrthonormalWithPositiveDeterminant) {
    Rng rng(1);
    for (int t = 0; t < 100; ++t) {
        const auto r = quat_to_rot(random_quat(rng));
        const auto rtr = mat_mul(transpose(r), r);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) EXPECT_LT(std::abs(rtr[i][j] - (i == j)), 1e-12);
        Eigen::Matrix3d m;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m(i, j) = r[i][j];
        EXPECT_NEAR(m.determinant(), 1.0, 1e-12);
    }
}

TEST(QuatToRot, ZeroQuaternionThrows) {
    EXPECT_THROW(quat_to_rot(Quat{0, 0, 0, 0}), ContractError);
}

TEST(Covariance, DiagonalForIdentityRotation) {
    const auto s = covariance(Quat{}, {1, 2, 3});
    const double want[3] = {1, 4, 9};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(s[i][j], i == j ? want[i] : 0.0, 1e-15);
}

TEST(Covariance, IsotropicIsRotationInvariant) {
    Rng rng(2);
    const auto s = covariance(random_quat(rng), {0.7, 0.7, 0.7});
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) EXPECT_NEAR(s[i][j], i == j ? 0.49 : 0.0, 1e-15);
}

TEST(Covariance, EigenvaluesMatchSquaredScales) {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        const Vec3 sc{rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0), rng.uniform(0.1, 3.0)};
        const auto s = covariance(random_quat(rng), sc);
        Eigen::Matrix3d m;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m(i, j) = s[i][j];
        EXPECT_LT((m - m.transpose()).cwiseAbs().maxCoeff(), 1e-15);
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m);
        std::array<double, 3> want{sc[0] * sc[0], sc[1] * sc[1], sc[2] * sc[2]};
        std::sort(want.begin(), want.end());
        for (int i = 0; i < 3; ++i) EXPECT_NEAR(es.eigenvalues()(i), want[i], 1e-9);
    }
}

TEST(Covariance, NonPositiveScaleThrows) {
    EXPECT_THROW(covariance(Quat{}, {1.0, 0.0, 1.0}), ContractError);
}

TEST(Contribution, AtCenterEqualsSemantics) {
    GaussianSet s;
    s.num_classes = 3;
    s.push_back({1, 2, 3}, Quat::yaw(0.3), {0.5, 1.0, 2.0}, std::vector<double>{0.1, -2.0, 7.0});
    const auto c = gaussian_contribution({1, 2, 3}, s, 0);
    EXPECT_EQ(c, (std::vector<double>{0.1, -2.0, 7.0}));
}

TEST(Contribution, MahalanobisSqrtTwoGivesExpMinusOne) {
    GaussianSet s;
    s.num_classes = 2;
    s.push_back({0, 0, 0}, Quat{}, {2.0, 1.0, 1.0}, std::vector<double>{1.0, 3.0});
    const auto c = gaussian_contribution({2.0 * std::sqrt(2.0), 0, 0}, s, 0);
    EXPECT_NEAR(c[0], std::exp(-1.0), 1e-15);
    EXPECT_NEAR(c[1], 3.0 * std::exp(-1.0), 1e-15);
}

TEST(Contribution, AnisotropicMatchesExplicitInverse) {
    Rng rng(4);
    GaussianSet s;
    s.num_classes = 1;
    const Quat q = random_quat(rng);
    s.push_back({0.5, -0.2, 0.1}, q, {2.0, 0.3, 0.6}, std::vector<double>{1.0});
    const auto r = quat_to_rot(q);
    const Vec3 long_axis{r[0][0], r[1][0], r[2][0]};
    const Vec3 short_axis{r[0][1], r[1][1], r[2][1]};
    const auto along_long = gaussian_contribution(s.mu[0] + 0.5 * long_axis, s, 0)[0];
    const auto along_short = gaussian_contribution(s.mu[0] + 0.5 * short_axis, s, 0)[0];
    EXPECT_GT(along_long, along_short);

    const auto sig = covariance(q, s.scale[0]);
    Eigen::Matrix3d m;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = sig[i][j];
    for (int t = 0; t < 20; ++t) {
        const Vec3 x{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        Eigen::Vector3d d(x[0] - 0.5, x[1] + 0.2, x[2] - 0.1);
        const double want = std::exp(-0.5 * d.dot(m.inverse() * d));
        EXPECT_NEAR(gaussian_contribution(x, s, 0)[0], want, 1e-12);
    }
}

TEST(SplatOccupancy, EmptySetPredictsEmpty) {
    GaussianSet s;
    const auto g = splat_occupancy(s, small_grid());
    for (auto l : g.to_labels()) EXPECT_EQ(l, 0);
}

TEST(SplatOccupancy, OneHotGaussianClaimsItsVoxel) {
    const auto spec = small_grid();
    GaussianSet s;
    std::vector<double> c(6, 0.0);
    c[2] = 10.0;
    s.push_back(spec.center(3, 4, 5), Quat{}, {0.3, 0.3, 0.3}, c);
    EXPECT_EQ(splat_occupancy(s, spec).to_labels()[spec.index(3, 4, 5)], 2);
}

TEST(SplatOccupancy, FullRadiusMatchesBruteForce) {
    const auto spec = small_grid();
    Rng rng(5);
    const auto s = random_set(rng, 16, spec);
    SplatOptions opts;
    opts.radius_multiplier = 1e4;
    const auto a = splat_occupancy(s, spec, opts);
    const auto b = brute_force_occupancy(s, spec);
    ASSERT_EQ(a.logits.size(), b.logits.size());
    for (std::size_t i = 0; i < a.logits.size(); ++i) EXPECT_NEAR(a.logits[i], b.logits[i], 1e-9);
}

TEST(BruteForce, SingleGaussianEqualsSampledContribution) {
    const auto spec = small_grid();
    Rng rng(6);
    const auto s = random_set(rng, 1, spec);
    const auto b = brute_force_occupancy(s, spec, 1.0);
    for (std::size_t v = 0; v < spec.num_voxels(); v += 7) {
        const auto c = gaussian_contribution(spec.center(v), s, 0);
        for (std::size_t k = 0; k < 6; ++k) {
            EXPECT_EQ(b.logits[v * 6 + k], c[k] + (k == 0 ? 1.0 : 0.0));
        }
    }
}

TEST(SplatOccupancy, PermutationInvariant) {
    const auto spec = small_grid();
    Rng rng(7);
    const auto s = random_set(rng, 24, spec);
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), 0);
    std::reverse(order.begin(), order.end());
    std::swap(order[3], order[17]);
    const auto p = s.permuted(order);
    const auto a = splat_occupancy(s, spec);
    const auto b = splat_occupancy(p, spec);
    for (std::size_t i = 0; i < a.logits.size(); ++i) EXPECT_NEAR(a.logits[i], b.logits[i], 1e-12);
    const auto ba = brute_force_occupancy(s, spec);
    const auto bb = brute_force_occupancy(p, spec);
    for (std::size_t i = 0; i < ba.logits.size(); ++i) EXPECT_NEAR(ba.logits[i], bb.logits[i], 1e-12);
}

TEST(SplatOccupancy, TruncationErrorIsBounded) {
    const auto spec = small_grid();
    Rng rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        const auto s = random_set(rng, 20, spec);
        SplatOptions opts;
        opts.radius_multiplier = 1.5;
        const auto local = splat_occupancy(s, spec, opts);
        const auto full = brute_force_occupancy(s, spec);
        for (std::size_t v = 0; v < spec.num_voxels(); ++v) {
            const Vec3 x = spec.center(v);
            double bound = 0.0;
            for (std::size_t g = 0; g < s.size(); ++g) {
                const double smax = std::max({s.scale[g][0], s.scale[g][1], s.scale[g][2]});
                if (dist2(x, s.mu[g]) <= std::pow(opts.radius_multiplier * smax, 2)) continue;
                const auto r = quat_to_rot(s.rot[g]);
                const Vec3 lp = mat_t_vec(r, x - s.mu[g]);
                double m2 = 0.0;
                for (int a = 0; a < 3; ++a) m2 += lp[a] * lp[a] / (s.scale[g][a] * s.scale[g][a]);
                double cmax = 0.0;
                for (int k = 0; k < 6; ++k) cmax = std::max(cmax, std::abs(s.sem[g * 6 + k]));
                bound += std::exp(-0.5 * m2) * cmax;
            }
            for (std::size_t k = 0; k < 6; ++k) {
                EXPECT_LE(std::abs(local.logits[v * 6 + k] - full.logits[v * 6 + k]), bound + 1e-12);
            }
        }
    }
}

TEST(SplatOccupancy, ArgmaxInvariantToRotation) {
    const auto spec = small_grid();
    Rng rng(9);
    for (int t = 0; t < 10; ++t) {
        GaussianSet s;
        std::vector<double> c(6, 0.0);
        c[4] = 8.0;
        s.push_back(spec.center(8, 8, 4), random_quat(rng), {0.2, 0.4, 0.3}, c);
        EXPECT_EQ(splat_occupancy(s, spec).to_labels()[spec.index(8, 8, 4)], 4);
    }
}

struct Scene4 {
    GridSpec spec;
    GaussianSet set;
    std::vector<std::uint8_t> labels;
};

Scene4 tiny_scene() {
    Scene4 sc;
    sc.spec.origin = {-1.0, -1.0, -0.5};
    sc.spec.voxel_size = 0.5;
    sc.spec.dims = {4, 4, 2};
    Rng rng(10);
    sc.set = random_set(rng, 4, sc.spec, 3);
    sc.labels.resize(sc.spec.num_voxels());
    for (auto& l : sc.labels) l = static_cast<std::uint8_t>(rng.below(3));
    return sc;
}

TEST(SplatGradient, CrossEntropyMatchesFiniteDifferences) {
    const auto sc = tiny_scene();
    const auto t = to_tensors(sc.set);
    SplatOptions opts;
    auto loss = [&](ad::Tape&, ad::Var mu, ad::Var ls, ad::Var rot, ad::Var sem) {
        return obj::cross_entropy(splat(mu, ls, rot, sem, sc.spec, opts), sc.labels);
    };
    const auto r_mu = ad::gradcheck(
        [&](ad::Tape& tp, ad::Var x) {
            return loss(tp, x, tp.constant(t.log_scale), tp.constant(t.rot), tp.constant(t.sem));
        },
        t.mu);
    const auto r_ls = ad::gradcheck(
        [&](ad::Tape& tp, ad::Var x) { return loss(tp, tp.constant(t.mu), x, tp.constant(t.rot), tp.constant(t.sem)); },
        t.log_scale);
    const auto r_rot = ad::gradcheck(
        [&](ad::Tape& tp, ad::Var x) {
            return loss(tp, tp.constant(t.mu), tp.constant(t.log_scale), x, tp.constant(t.sem));
        },
        t.rot);
    const auto r_sem = ad::gradcheck(
        [&](ad::Tape& tp, ad::Var x) {
            return loss(tp, tp.constant(t.mu), tp.constant(t.log_scale), tp.constant(t.rot), x);
        },
        t.sem);
    EXPECT_LT(r_mu.max_rel_error, 1e-5);
    EXPECT_LT(r_ls.max_rel_error, 1e-5);
    EXPECT_LT(r_rot.max_rel_error, 1e-5);
    EXPECT_LT(r_sem.max_rel_error, 1e-5);
}

TEST(SplatTensors, RoundTrip) {
    Rng rng(11);
    const auto s = random_set(rng, 5, small_grid());
    const auto t = to_tensors(s);
    const auto back = from_tensors(t.mu, t.log_scale, t.rot, t.sem);
    ASSERT_EQ(back.size(), s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        EXPECT_EQ(back.mu[i], s.mu[i]);
        for (int a = 0; a < 3; ++a) EXPECT_NEAR(back.scale[i][a], s.scale[i][a], 1e-15);
    }
    EXPECT_EQ(back.sem, s.sem);
}

TEST(SplatTape, ForwardMatchesDenseSplat) {
    Rng rng(12);
    const auto spec = small_grid();
    const auto s = random_set(rng, 12, spec);
    const auto t = to_tensors(s);
    ad::Tape tape;
    auto out = splat(tape.constant(t.mu), tape.constant(t.log_scale), tape.constant(t.rot), tape.constant(t.sem), spec);
    const auto ref = splat_occupancy(s, spec);
    for (std::size_t i = 0; i < ref.logits.size(); ++i) EXPECT_NEAR(out.value()[i], ref.logits[i], 1e-12);
}

TEST(GaussianSet, ValidateRejectsNonUnitQuaternion) {
    GaussianSet s;
    s.num_classes = 1;
    s.push_back({0, 0, 0}, Quat{}, {1, 1, 1}, std::vector<double>{0.0});
    s.rot[0].w = 1.1;
    EXPECT_THROW(s.validate(), ContractError);
}

} // namespace
} // namespace occ::splat
