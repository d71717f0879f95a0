// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/checks.hpp"

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <optional>

#include "occ/error.hpp"
#include "occ/lcd.hpp"
#include "occ/pipeline.hpp"

namespace occ::checks {

splat::GaussianSet random_gaussians(Rng& rng, std::size_t n, const GridSpec& grid, int num_classes) {
    splat::GaussianSet s;
    s.num_classes = num_classes;
    const Vec3 hi = grid.extent_max();
    std::vector<double> c(static_cast<std::size_t>(num_classes));
    for (std::size_t i = 0; i < n; ++i) {
        Vec3 m;
        for (int a = 0; a < 3; ++a) m[a] = rng.uniform(grid.origin[a], hi[a]);
        const Vec3 sc{rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0), rng.uniform(0.2, 1.0)};
        const Quat q = Quat{rng.normal(), rng.normal(), rng.normal(), rng.normal()}.normalized();
        for (auto& v : c) v = rng.uniform(-2.0, 2.0);
        s.push_back(m, q, sc, c);
    }
    return s;
}

double GradientSuite::worst_splat() const {
    double w = 0.0;
    for (const auto& e : splat) w = std::max(w, e.error);
    return w;
}

double GradientSuite::worst_diffusion() const {
    double w = 0.0;
    for (const auto& e : diffusion) w = std::max(w, e.error);
    return w;
}

namespace {

std::vector<NamedError> splat_checks() {
    GridSpec grid;
    grid.origin = {-1.0, -1.0, -0.5};
    grid.voxel_size = 0.5;
    grid.dims = {4, 4, 2};
    Rng rng(10);
    const auto set = random_gaussians(rng, 4, grid, 3);
    std::vector<std::uint8_t> labels(grid.num_voxels());
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(3));
    const auto t = splat::to_tensors(set);
    auto loss = [&](ad::Var mu, ad::Var ls, ad::Var rot, ad::Var sem) {
        return obj::cross_entropy(splat::splat(mu, ls, rot, sem, grid), labels);
    };
    std::vector<NamedError> out;
    out.push_back({"mu", ad::gradcheck(
                             [&](ad::Tape& tp, ad::Var x) {
                                 return loss(x, tp.constant(t.log_scale), tp.constant(t.rot), tp.constant(t.sem));
                             },
                             t.mu)
                             .max_rel_error});
    out.push_back({"log_scale", ad::gradcheck(
                                    [&](ad::Tape& tp, ad::Var x) {
                                        return loss(tp.constant(t.mu), x, tp.constant(t.rot), tp.constant(t.sem));
                                    },
                                    t.log_scale)
                                    .max_rel_error});
    out.push_back({"sem", ad::gradcheck(
                              [&](ad::Tape& tp, ad::Var x) {
                                  return loss(tp.constant(t.mu), tp.constant(t.log_scale), tp.constant(t.rot), x);
                              },
                              t.sem)
                              .max_rel_error});
    return out;
}

std::vector<NamedError> diffusion_checks() {
    const auto sched = lcd::make_schedule();
    Rng rng(7);
    auto points = [&](std::size_t n) {
        std::vector<Vec3> p(n);
        for (auto& v : p) v = {rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0), rng.uniform(-1.0, 1.0)};
        return p;
    };
    const auto targets = points(8);
    const lcd::Condition cond(points(12));
    lcd::MlpConfig mc;
    mc.layers = 2;
    mc.hidden = 16;
    mc.t_embed = 8;
    mc.knn = 4;
    lcd::MlpDenoiser net(sched, mc, 1);
    std::vector<NamedError> out;
    for (const auto& [name, value] : net.params()) {
        auto fn = [&, n = name](ad::Tape& tape, ad::Var x) {
            ad::Bound b(tape, net.params());
            b.set(n, x);
            Rng r(11);
            return lcd::diffusion_loss(net, b, targets, cond, r);
        };
        out.push_back({name, ad::gradcheck(fn, value).max_rel_error});
    }
    return out;
}

double lovasz_check() {
    const ad::Tensor p({4, 3}, {0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.15, 0.25, 0.6, 0.45, 0.35, 0.2});
    const std::vector<std::uint8_t> labels{0, 1, 2, 1};
    return ad::gradcheck([&](ad::Tape&, ad::Var x) { return obj::lovasz_softmax(x, labels); }, p).max_rel_error;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

} // namespace

GradientSuite run_gradient_suite(bool with_gaf) {
    GradientSuite s;
    s.splat = splat_checks();
    if (with_gaf) s.gaf = SmallGaf().gradcheck_all();
    s.diffusion = diffusion_checks();
    s.lovasz = lovasz_check();
    return s;
}

long peak_rss_kb() {
    rusage ru{};
    getrusage(RUSAGE_SELF, &ru);
    return ru.ru_maxrss;
}

std::vector<BenchPoint> bench_scaling(std::span<const int> counts, int reps, bool with_gaf, std::uint64_t seed) {
    require(reps >= 1, "bench: reps must be >= 1");
    using Clock = std::chrono::steady_clock;
    const GridSpec grid;
    pipe::RunConfig cfg;
    cfg.seed = seed;
    std::optional<pipe::SceneData> data;
    if (with_gaf) data = pipe::build_scene(cfg);
    std::vector<BenchPoint> out;
    for (int n : counts) {
        require(n >= 1, "bench: Gaussian counts must be >= 1");
        BenchPoint bp;
        Rng rng = Rng(seed).split(static_cast<std::uint64_t>(n));
        const auto set = random_gaussians(rng, static_cast<std::size_t>(n), grid, 6);
        bp.gaussians = set.size();
        std::vector<double> times;
        for (int r = 0; r < reps; ++r) {
            const auto t0 = Clock::now();
            const auto occ = splat::splat_occupancy(set, grid);
            times.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
            if (occ.logits.empty()) times.back() = 0.0;
        }
        bp.splat_ms = median(times);
        if (with_gaf) {
            init::InitConfig ic = cfg.init;
            ic.num_gaussians = n;
            const auto init = init::init_gaussians(data->target.points, ic);
            const auto ts = pipe::make_training_set(cfg, data->target, init.gaussians, *data);
            const ad::ParamStore params = gaf::init_params(cfg.gaf, seed);
            times.clear();
            for (int r = 0; r < reps; ++r) {
                const auto t0 = Clock::now();
                (void)pipe::refine(params, ts, cfg);
                times.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
            }
            bp.gaf_ms = median(times);
        }
        bp.peak_rss_kb = peak_rss_kb();
        out.push_back(bp);
    }
    return out;
}

} // namespace occ::checks
