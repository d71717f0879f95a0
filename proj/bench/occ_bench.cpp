// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "occ/checks.hpp"
#include "occ/init.hpp"
#include "occ/pipeline.hpp"
#include "occ/runtime.hpp"
#include "occ/splat.hpp"

namespace {

using namespace occ;

void BM_SplatLocal(benchmark::State& state) {
    const GridSpec grid;
    Rng rng(1);
    const auto set = checks::random_gaussians(rng, static_cast<std::size_t>(state.range(0)), grid, 6);
    for (auto _ : state) benchmark::DoNotOptimize(splat::splat_occupancy(set, grid));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_SplatLocal)->Arg(128)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond)->Complexity();

void BM_SplatBruteForce(benchmark::State& state) {
    const GridSpec grid;
    Rng rng(1);
    const auto set = checks::random_gaussians(rng, static_cast<std::size_t>(state.range(0)), grid, 6);
    for (auto _ : state) benchmark::DoNotOptimize(splat::brute_force_occupancy(set, grid));
}
BENCHMARK(BM_SplatBruteForce)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

std::vector<Vec3> desk_cloud() {
    pipe::RunConfig cfg;
    return pipe::build_scene(cfg).target.points;
}

void BM_DensitySelect(benchmark::State& state) {
    const auto pts = desk_cloud();
    for (auto _ : state) benchmark::DoNotOptimize(init::density_select(pts, 0.5, 512));
}
BENCHMARK(BM_DensitySelect)->Unit(benchmark::kMillisecond);

void BM_DensitySelectReference(benchmark::State& state) {
    auto pts = desk_cloud();
    pts.resize(2000);
    for (auto _ : state) benchmark::DoNotOptimize(init::density_select_reference(pts, 0.5, 512));
}
BENCHMARK(BM_DensitySelectReference)->Unit(benchmark::kMillisecond);

void BM_GafForward(benchmark::State& state) {
    pipe::RunConfig cfg;
    const auto data = pipe::build_scene(cfg);
    init::InitConfig ic = cfg.init;
    ic.num_gaussians = static_cast<int>(state.range(0));
    const auto init = init::init_gaussians(data.target.points, ic);
    const auto ts = pipe::make_training_set(cfg, data.target, init.gaussians, data);
    const auto params = gaf::init_params(cfg.gaf, 0);
    for (auto _ : state) benchmark::DoNotOptimize(pipe::refine(params, ts, cfg));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_GafForward)->Arg(128)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond)->Complexity();

void BM_TrainStep(benchmark::State& state) {
    pipe::RunConfig cfg;
    cfg.train.total_iters = 1;
    const auto data = pipe::build_scene(cfg);
    const auto init = init::init_gaussians(data.raw.points, cfg.init);
    const auto ts = pipe::make_training_set(cfg, data.raw, init.gaussians, data);
    const auto params = gaf::init_params(cfg.gaf, 0);
    for (auto _ : state) benchmark::DoNotOptimize(pipe::train(cfg, ts, params));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

} // namespace

int main(int argc, char** argv) {
    occ::configure_runtime(0);
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
