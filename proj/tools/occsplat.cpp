// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "occ/checks.hpp"
#include "occ/error.hpp"
#include "occ/io.hpp"
#include "occ/pipeline.hpp"
#include "occ/runtime.hpp"
#include "occ/spatial.hpp"

namespace fs = std::filesystem;
using namespace occ;

namespace {

struct Common {
    std::string config_file;
    std::vector<std::string> overrides;
    int threads = 0;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config_file, "flat key = value config file");
    sub->add_option("--set", c.overrides, "KEY=VALUE override, repeatable");
    sub->add_option("--threads", c.threads, "OpenMP worker cap (0 keeps the default)");
}

pipe::RunConfig load_config(const Common& c) {
    pipe::RunConfig cfg;
    if (!c.config_file.empty()) cfg.apply_file(c.config_file);
    for (const auto& kv : c.overrides) {
        const auto eq = kv.find('=');
        require(eq != std::string::npos, "--set expects KEY=VALUE, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void require_file(const std::string& path) {
    if (!fs::exists(path)) throw DataError("missing input file: " + path);
}

fs::path out_dir(const pipe::RunConfig& cfg, const std::string& flag) {
    const fs::path dir = flag.empty() ? cfg.out_dir : fs::path(flag);
    fs::create_directories(dir);
    return dir;
}

/// Scene data for stages that need the rendered views; ground truth from `gt_path` when given.
pipe::SceneData scene_for(const pipe::RunConfig& cfg, const std::string& gt_path) {
    pipe::SceneData data = pipe::build_scene(cfg);
    if (!gt_path.empty()) {
        require_file(gt_path);
        OccupancyGrid gt = io::load_occupancy(gt_path);
        if (!(gt.spec == cfg.grid)) throw DataError(gt_path + ": grid differs from the configured grid");
        data.gt = std::move(gt);
    }
    return data;
}

void print_metrics(const pipe::Metrics& m) {
    nlohmann::json j;
    j["iou"] = m.iou;
    j["miou"] = m.miou;
    nlohmann::json pc = nlohmann::json::object();
    for (const auto& c : m.per_class) pc[std::to_string(c.class_id)] = c.iou;
    j["per_class_iou"] = pc;
    std::cout << j.dump(2) << "\n";
}

int run(int argc, char** argv) {
    CLI::App app{"Gaussian splatting semantic occupancy from LiDAR and images"};
    app.require_subcommand(1);
    Common common;

    std::string out;
    auto* gen = app.add_subcommand("gen-scene", "generate a synthetic scene; writes gt.gocc");
    add_common(gen, common);
    gen->add_option("--out", out, "output directory (default out.dir)");

    auto* sim = app.add_subcommand("simulate-lidar", "simulate K sweeps; writes raw.gopc and target.gopc");
    add_common(sim, common);
    sim->add_option("--out", out, "output directory (default out.dir)");

    std::string raw_path, target_path, cloud_path, gauss_path, gt_path, model_path, pred_path;
    bool oracle = false;
    auto* comp = app.add_subcommand("complete", "LCD completion of a raw scan");
    add_common(comp, common);
    comp->add_option("--raw", raw_path, "raw scan (GOPC)")->required();
    comp->add_option("--target", target_path, "dense target used to train the denoiser (GOPC)")->required();
    comp->add_option("--out", out, "completed cloud (GOPC)")->required();
    comp->add_flag("--oracle", oracle, "use the exact-noise oracle denoiser for the target");

    auto* ini = app.add_subcommand("init-gaussians", "density selection + random coverage");
    add_common(ini, common);
    ini->add_option("--cloud", cloud_path, "point cloud (GOPC)")->required();
    ini->add_option("--out", out, "Gaussian set (GOWT)")->required();

    std::string losses_path;
    auto* trn = app.add_subcommand("train", "joint training; views are re-rendered from the configured scene");
    add_common(trn, common);
    trn->add_option("--cloud", cloud_path, "completed cloud (GOPC)")->required();
    trn->add_option("--gaussians", gauss_path, "initial Gaussians (GOWT)")->required();
    trn->add_option("--gt", gt_path, "ground truth (GOCC)")->required();
    trn->add_option("--out", out, "model checkpoint (GOWT)")->required();
    trn->add_option("--losses", losses_path, "write the per-iteration loss, one per line");

    auto* prd = app.add_subcommand("predict", "refine and splat; writes a label grid");
    add_common(prd, common);
    prd->add_option("--cloud", cloud_path, "completed cloud (GOPC)")->required();
    prd->add_option("--gaussians", gauss_path, "initial Gaussians (GOWT)")->required();
    prd->add_option("--model", model_path, "model checkpoint (GOWT)")->required();
    prd->add_option("--out", out, "prediction (GOCC)")->required();

    auto* evl = app.add_subcommand("eval", "IoU and mIoU of a prediction");
    evl->add_option("--pred", pred_path, "prediction (GOCC)")->required();
    evl->add_option("--gt", gt_path, "ground truth (GOCC)")->required();

    bool skip_gaf = false;
    auto* gck = app.add_subcommand("gradcheck", "finite-difference suites; prints max relative errors");
    gck->add_flag("--skip-gaf", skip_gaf, "skip the full-model check");

    std::vector<int> counts{128, 512, 2048};
    int reps = 5;
    bool no_gaf = false;
    auto* bch = app.add_subcommand("bench", "wall time and peak RSS of splat and gaf_forward vs Gaussian count");
    add_common(bch, common);
    bch->add_option("--counts", counts, "Gaussian counts")->delimiter(',');
    bch->add_option("--reps", reps, "repetitions per point (median reported)");
    bch->add_flag("--no-gaf", no_gaf, "time splatting only");

    auto* runc = app.add_subcommand("run", "full pipeline; writes artifacts and report.json into out.dir");
    add_common(runc, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }
    configure_runtime(common.threads);

    if (gen->parsed()) {
        const auto cfg = load_config(common);
        const auto dir = out_dir(cfg, out);
        const auto data = pipe::build_scene(cfg);
        io::save_occupancy(dir / "gt.gocc", data.gt);
        std::cout << "wrote " << (dir / "gt.gocc").string() << "\n";
    } else if (sim->parsed()) {
        const auto cfg = load_config(common);
        const auto dir = out_dir(cfg, out);
        const auto data = pipe::build_scene(cfg);
        io::save_cloud(dir / "raw.gopc", data.raw);
        io::save_cloud(dir / "target.gopc", data.target);
        std::cout << "raw " << data.raw.size() << " points, target " << data.target.size() << " points\n";
    } else if (comp->parsed()) {
        const auto cfg = load_config(common);
        require_file(raw_path);
        require_file(target_path);
        const auto raw = io::load_cloud(raw_path);
        const auto target = io::load_cloud(target_path);
        const auto done = oracle ? pipe::complete_with_oracle(cfg, raw, target) : pipe::complete_cloud(cfg, raw, target);
        io::save_cloud(out, done);
        std::printf("chamfer(P, T) = %.6f  chamfer(P', T) = %.6f  points %zu\n",
                    chamfer(raw.world_points(), target.world_points()), chamfer(done.world_points(), target.world_points()),
                    done.size());
    } else if (ini->parsed()) {
        const auto cfg = load_config(common);
        require_file(cloud_path);
        const auto res = pipe::init_from_cloud(cfg, io::load_cloud(cloud_path));
        pipe::save_gaussians(out, res.gaussians);
        std::printf("gaussians %zu (density %zu, random %zu)\n", res.gaussians.size(), res.num_density, res.num_random);
    } else if (trn->parsed()) {
        const auto cfg = load_config(common);
        require_file(cloud_path);
        require_file(gauss_path);
        const auto data = scene_for(cfg, gt_path);
        const auto ts = pipe::make_training_set(cfg, io::load_cloud(cloud_path), pipe::load_gaussians(gauss_path), data);
        gaf::GafConfig gc = cfg.gaf;
        gc.num_classes = cfg.num_classes;
        const auto res = pipe::train(cfg, ts, gaf::init_params(gc, Rng(cfg.seed).split("gaf.params")()));
        ad::save_checkpoint(out, res.params);
        if (!losses_path.empty()) {
            std::ofstream lf(losses_path);
            if (!lf) throw DataError("cannot open for writing: " + losses_path);
            for (double l : res.losses) lf << l << "\n";
        }
        std::printf("iterations %zu final loss %.6f\n", res.losses.size(), res.losses.empty() ? 0.0 : res.losses.back());
    } else if (prd->parsed()) {
        const auto cfg = load_config(common);
        require_file(cloud_path);
        require_file(gauss_path);
        require_file(model_path);
        const auto data = scene_for(cfg, "");
        const auto ts = pipe::make_training_set(cfg, io::load_cloud(cloud_path), pipe::load_gaussians(gauss_path), data);
        io::save_occupancy(out, pipe::predict(ad::load_checkpoint(model_path), ts, cfg));
        std::cout << "wrote " << out << "\n";
    } else if (evl->parsed()) {
        require_file(pred_path);
        require_file(gt_path);
        print_metrics(pipe::evaluate(io::load_occupancy(pred_path), io::load_occupancy(gt_path)));
    } else if (gck->parsed()) {
        const auto s = checks::run_gradient_suite(!skip_gaf);
        for (const auto& e : s.splat) std::printf("splat %-24s %.3e\n", e.name.c_str(), e.error);
        if (!skip_gaf) {
            std::printf("gaf   tensor worst %-16s %.3e\n", s.gaf.worst_tensor_name.c_str(), s.gaf.worst_tensor);
            std::printf("gaf   element worst %-15s %.3e\n", s.gaf.worst_element_name.c_str(), s.gaf.worst_elementwise);
        }
        for (const auto& e : s.diffusion) std::printf("lcd   %-24s %.3e\n", e.name.c_str(), e.error);
        std::printf("lovasz %-23s %.3e\n", "probs", s.lovasz);
        if (!std::isfinite(s.worst_splat()) || !std::isfinite(s.worst_diffusion()) || !std::isfinite(s.lovasz) ||
            !std::isfinite(s.gaf.worst_tensor)) {
            throw NumericError("non-finite gradient error");
        }
    } else if (bch->parsed()) {
        const auto cfg = load_config(common);
        const auto pts = checks::bench_scaling(counts, reps, !no_gaf, cfg.seed);
        std::printf("%8s %12s %12s %14s\n", "N_G", "splat_ms", "gaf_ms", "peak_rss_kb");
        for (const auto& p : pts) {
            std::printf("%8zu %12.3f %12.3f %14ld\n", p.gaussians, p.splat_ms, p.gaf_ms, p.peak_rss_kb);
        }
    } else if (runc->parsed()) {
        const auto cfg = load_config(common);
        const auto rep = pipe::run_pipeline(cfg);
        std::cout << rep.to_json();
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
