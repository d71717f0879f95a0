// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "occ/checks.hpp"
#include "occ/init.hpp"
#include "occ/io.hpp"
#include "occ/lcd.hpp"
#include "occ/objectives.hpp"
#include "occ/params.hpp"
#include "occ/pipeline.hpp"
#include "occ/runtime.hpp"
#include "occ/spatial.hpp"
#include "occ/splat.hpp"

namespace fs = std::filesystem;
using namespace occ;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("occsplat_acceptance_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome splat_oracle() {
    const auto t0 = Clock::now();
    GridSpec grid;
    grid.origin = {-4.0, -4.0, -2.0};
    grid.voxel_size = 0.5;
    grid.dims = {16, 16, 8};
    splat::SplatOptions full;
    full.radius_multiplier = 100.0;  // 100 * 0.2 m covers the 11.5 m grid diagonal
    double worst = 0.0;
    const int configs = 24;
    for (int c = 0; c < configs; ++c) {
        Rng rng = Rng(100).split(static_cast<std::uint64_t>(c));
        const auto n = static_cast<std::size_t>(1 + rng.below(64));
        const auto set = checks::random_gaussians(rng, n, grid, 6);
        const auto fast = splat::splat_occupancy(set, grid, full);
        const auto ref = splat::brute_force_occupancy(set, grid, full.empty_prior);
        for (std::size_t i = 0; i < fast.logits.size(); ++i) {
            worst = std::max(worst, std::abs(fast.logits[i] - ref.logits[i]));
        }
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-9 && secs < 10.0,
            fmt("%d configs, max |local - brute| = %.3g (<= 1e-9), %.2f s (< 10 s)", configs, worst, secs)};
}

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    const auto s = checks::run_gradient_suite(true);
    const double secs = seconds_since(t0);
    const bool ok = s.worst_splat() < 1e-5 && s.gaf.worst_tensor < 1e-5 && s.worst_diffusion() < 1e-5 &&
                    s.lovasz < 1e-4 && secs < 60.0;
    return {ok, fmt("(a) splat %.2e (b) gaf_forward %.2e [%s] (c) diffusion %.2e (d) lovasz %.2e, %.1f s (< 60 s)",
                    s.worst_splat(), s.gaf.worst_tensor, s.gaf.worst_tensor_name.c_str(), s.worst_diffusion(),
                    s.lovasz, secs)};
}

Outcome lcd_identity() {
    const auto sched = lcd::make_schedule(1000, 3e-5, 7e-3);
    Rng rng(5);
    std::vector<Vec3> cond_pts(200);
    for (auto& p : cond_pts) p = {rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0), rng.uniform(0.0, 3.0)};
    const lcd::Condition cond(cond_pts);
    double worst = 0.0;
    for (int steps : {1, 10, 50, 1000}) {
        const auto seeds = lcd::duplicate_round_robin(cond_pts, 600);
        lcd::OracleDenoiser oracle(seeds, sched);
        Rng r(6);
        const auto out = lcd::reverse_sample(oracle, cond, sched, 600, steps, lcd::SampleMode::Deterministic, r);
        for (std::size_t i = 0; i < seeds.size(); ++i) worst = std::max(worst, std::sqrt(dist2(out.points[i], seeds[i])));
    }
    std::vector<Vec3> targets(100000);
    for (auto& p : targets) p = {rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0), rng.uniform(0.0, 3.0)};
    double worst_rel = 0.0;
    std::string stds;
    for (int t : {100, 500, 1000}) {
        Rng r = Rng(7).split(static_cast<std::uint64_t>(t));
        const auto pert = lcd::forward_perturb(targets, t, sched, r);
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t i = 0; i < targets.size(); ++i) {
            for (int a = 0; a < 3; ++a) {
                const double d = pert.noised[i][a] - targets[i][a];
                sum += d;
                sum2 += d * d;
            }
        }
        const double n = 3.0 * static_cast<double>(targets.size());
        const double sd = std::sqrt(sum2 / n - (sum / n) * (sum / n));
        const double want = std::sqrt(1.0 - sched.alpha_bar[static_cast<std::size_t>(t - 1)]);
        worst_rel = std::max(worst_rel, std::abs(sd - want) / want);
        stds += fmt(" t=%d %.4f/%.4f", t, sd, want);
    }
    return {worst <= 1e-9 && worst_rel <= 0.02,
            fmt("oracle reconstruction %.2e (<= 1e-9); std/expected%s, worst rel %.2f%% (<= 2%%)", worst,
                stds.c_str(), 100.0 * worst_rel)};
}

Outcome init_properties() {
    const double rd = 0.5;
    double min_pair = 1e300;
    bool oracle_match = true;
    int compared = 0;
    for (int c = 0; c < 100; ++c) {
        Rng rng = Rng(200).split(static_cast<std::uint64_t>(c));
        const auto n = static_cast<std::size_t>(50 + rng.below(451));
        std::vector<Vec3> pts(n);
        for (auto& p : pts) p = {rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0), rng.uniform(0.0, 2.0)};
        const auto sel = init::density_select(pts, rd, n);
        for (std::size_t i = 0; i < sel.centers.size(); ++i) {
            for (std::size_t j = i + 1; j < sel.centers.size(); ++j) {
                min_pair = std::min(min_pair, std::sqrt(dist2(pts[sel.centers[i]], pts[sel.centers[j]])));
            }
        }
        const auto ref = init::density_select_reference(pts, rd, n);
        oracle_match = oracle_match && ref.centers == sel.centers && ref.removed == sel.removed;
        ++compared;
    }
    init::InitConfig ic;
    double lo = 1e300, hi = -1e300;
    for (int c = 0; c < 10; ++c) {
        Rng rng = Rng(300).split(static_cast<std::uint64_t>(c));
        std::vector<Vec3> pts(2000);
        for (auto& p : pts) p = {rng.uniform(-10.0, 10.0), rng.uniform(-10.0, 10.0), rng.uniform(0.0, 3.0)};
        ic.seed = static_cast<std::uint64_t>(c);
        const auto res = init::init_gaussians(pts, ic);
        for (const auto& s : res.gaussians.scale) {
            for (double v : s) {
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
        }
    }
    const bool ok = min_pair > rd && oracle_match && lo >= 0.2 && hi <= 1.0;
    return {ok, fmt("min pairwise center distance %.6f (> R_d = %.1f) on 100 clouds; oracle match on %d clouds: %s; "
                    "scales in [%.3f, %.3f] (within [0.20, 1.00])",
                    min_pair, rd, compared, oracle_match ? "yes" : "no", lo, hi)};
}

Outcome metric_correctness() {
    int exact = 0;
    const int pairs = 50;
    for (int c = 0; c < pairs; ++c) {
        Rng rng = Rng(400).split(static_cast<std::uint64_t>(c));
        const int classes = 2 + static_cast<int>(rng.below(7));
        const std::size_t n = 200 + rng.below(800);
        std::vector<std::uint8_t> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = static_cast<std::uint8_t>(rng.uniform() < 0.5 ? 0 : rng.below(static_cast<std::uint64_t>(classes)));
            b[i] = static_cast<std::uint8_t>(rng.uniform() < 0.5 ? 0 : rng.below(static_cast<std::uint64_t>(classes)));
        }
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < n; ++i) {
            inter += (a[i] != 0) && (b[i] != 0);
            uni += (a[i] != 0) || (b[i] != 0);
        }
        const double want_iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
        double sum = 0.0;
        int present = 0;
        for (int k = 1; k < classes; ++k) {
            std::size_t both = 0, either = 0;
            for (std::size_t i = 0; i < n; ++i) {
                both += a[i] == k && b[i] == k;
                either += a[i] == k || b[i] == k;
            }
            if (either == 0) continue;
            sum += static_cast<double>(both) / static_cast<double>(either);
            ++present;
        }
        const double want_miou = present == 0 ? 1.0 : sum / present;
        exact += obj::iou(a, b) == want_iou && obj::miou(a, b, classes) == want_miou;
    }
    ad::Tape tape;
    const std::vector<std::uint8_t> labels{0, 1, 2, 3, 4, 5, 1, 2};
    const double ce = obj::cross_entropy(tape.constant(ad::Tensor({8, 6}, 0.3)), labels).value().item();
    const double ce_err = std::abs(ce - std::log(6.0));
    ad::Tensor onehot({8, 6}, 0.0);
    for (std::size_t i = 0; i < labels.size(); ++i) onehot[i * 6 + labels[i]] = 1.0;
    const double lov = obj::lovasz_softmax(tape.constant(onehot), labels).value().item();
    return {exact == pairs && ce_err <= 1e-12 && lov == 0.0,
            fmt("iou/miou exact on %d/%d pairs; |CE - ln 6| = %.1e (<= 1e-12); Lovasz(perfect) = %g", exact, pairs,
                ce_err, lov)};
}

Outcome end_to_end() {
    pipe::RunConfig cfg;
    cfg.seed = 0;
    cfg.out_dir = scratch_dir("e2e");
    const auto t0 = Clock::now();
    const auto rep = pipe::run_pipeline(cfg);
    const double secs = seconds_since(t0);

    pipe::RunConfig short_cfg = cfg;
    short_cfg.train.total_iters = 3;
    short_cfg.lcd.iterations = 20;
    const fs::path dir_a = scratch_dir("det_a"), dir_b = scratch_dir("det_b");
    short_cfg.out_dir = dir_a;
    const auto a = pipe::run_pipeline(short_cfg);
    short_cfg.out_dir = dir_b;
    const auto b = pipe::run_pipeline(short_cfg);
    bool deterministic = a.final_loss == b.final_loss && a.metrics.iou == b.metrics.iou;
    for (const char* f : {"completed.gopc", "model.gowt", "pred.gocc"}) {
        deterministic = deterministic && file_bytes(dir_a / f) == file_bytes(dir_b / f);
    }
    const bool ok = rep.metrics.iou >= 0.5 && rep.metrics.miou > rep.untrained.miou && deterministic && secs < 600.0;
    return {ok, fmt("%d iterations: IoU %.3f (>= 0.5), mIoU %.3f vs untrained %.3f, repeat run identical: %s, %.0f s "
                    "(< 600 s)",
                    cfg.train.total_iters, rep.metrics.iou, rep.metrics.miou, rep.untrained.miou,
                    deterministic ? "yes" : "no", secs)};
}

double tail_mean(const std::vector<double>& losses, std::size_t count) {
    count = std::min(count, losses.size());
    double s = 0.0;
    for (std::size_t i = losses.size() - count; i < losses.size(); ++i) s += losses[i];
    return count == 0 ? 0.0 : s / static_cast<double>(count);
}

Outcome ablation_direction() {
    const int iters = 200;
    double ch_raw = 0.0, ch_done = 0.0, loss_full = 0.0, loss_fixed = 0.0;
    std::string per_seed;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        pipe::RunConfig cfg;
        cfg.seed = seed;
        cfg.train.total_iters = iters;
        const auto data = pipe::build_scene(cfg);
        const auto done = pipe::complete_cloud(cfg, data.raw, data.target);
        const double cr = chamfer(data.raw.points, data.target.points);
        const double cd = chamfer(done.points, data.target.points);
        ch_raw += cr / 3.0;
        ch_done += cd / 3.0;
        const auto init = pipe::init_from_cloud(cfg, done);
        const auto ts = pipe::make_training_set(cfg, done, init.gaussians, data);
        double final_loss[2] = {0.0, 0.0};
        for (int ggs = 1; ggs >= 0; --ggs) {
            pipe::RunConfig c = cfg;
            c.gaf.guided_sampling = ggs == 1;
            const auto params = gaf::init_params(c.gaf, Rng(seed).split("gaf.params")());
            const auto res = pipe::train(c, ts, params);
            final_loss[ggs] = tail_mean(res.losses, 20);
        }
        loss_full += final_loss[1] / 3.0;
        loss_fixed += final_loss[0] / 3.0;
        per_seed += fmt(" [seed %d: %.3f/%.3f, %.4f/%.4f]", static_cast<int>(seed), cd, cr, final_loss[1], final_loss[0]);
    }
    const bool ok = ch_done < ch_raw && loss_full <= loss_fixed;
    return {ok, fmt("mean Chamfer(P',T) %.3f < Chamfer(P,T) %.3f; mean final loss (last 20 of %d iterations) full %.4f "
                    "<= GGS off %.4f;%s",
                    ch_done, ch_raw, iters, loss_full, loss_fixed, per_seed.c_str())};
}

Outcome format_round_trips() {
    const fs::path dir = scratch_dir("formats");
    Rng rng(500);
    scene::PointCloud cloud;
    for (int i = 0; i < 1000; ++i) {
        cloud.points.push_back({rng.normal() * 10.0, rng.normal() * 10.0, rng.normal()});
        cloud.intensity.push_back(rng.uniform());
    }
    cloud.pose.translation = {1.5, -2.25, 0.125};
    cloud.pose.rotation = Quat{0.9, 0.1, -0.3, 0.2}.normalized();
    io::save_cloud(dir / "c.gopc", cloud);
    const auto c2 = io::load_cloud(dir / "c.gopc");
    io::save_cloud(dir / "c2.gopc", c2);
    bool gopc = file_bytes(dir / "c.gopc") == file_bytes(dir / "c2.gopc") && c2.size() == cloud.size();
    for (std::size_t i = 0; gopc && i < cloud.size(); ++i) {
        for (int a = 0; a < 3; ++a) gopc = gopc && c2.points[i][a] == static_cast<float>(cloud.points[i][a]);
        gopc = gopc && c2.intensity[i] == static_cast<float>(cloud.intensity[i]);
    }

    GridSpec grid;
    auto labels = OccupancyGrid::make_labels(grid, 6);
    for (auto& l : labels.labels) l = static_cast<std::uint8_t>(rng.below(6));
    auto logits = OccupancyGrid::make_logits(grid, 6);
    for (auto& v : logits.logits) v = rng.normal();
    io::save_occupancy(dir / "l.gocc", labels);
    io::save_occupancy(dir / "g.gocc", logits);
    const auto l2 = io::load_occupancy(dir / "l.gocc");
    const auto g2 = io::load_occupancy(dir / "g.gocc");
    bool gocc = l2.labels == labels.labels && l2.spec == grid;
    for (std::size_t i = 0; i < logits.logits.size(); ++i) {
        gocc = gocc && static_cast<float>(logits.logits[i]) == static_cast<float>(g2.logits[i]);
    }
    io::save_occupancy(dir / "g2.gocc", g2);
    gocc = gocc && file_bytes(dir / "g.gocc") == file_bytes(dir / "g2.gocc");

    const ad::ParamStore store = gaf::init_params(gaf::GafConfig{}, 3);
    ad::save_checkpoint(dir / "w.gowt", store);
    const auto s2 = ad::load_checkpoint(dir / "w.gowt");
    bool gowt = s2.size() == store.size();
    for (const auto& [name, t] : store) {
        gowt = gowt && s2.contains(name) && s2.at(name).shape() == t.shape() && s2.at(name).vec() == t.vec();
    }

    const auto m = pipe::evaluate(io::load_occupancy(dir / "l.gocc"), io::load_occupancy(dir / "l.gocc"));
    const bool ok = gopc && gocc && gowt && m.iou == 1.0 && m.miou == 1.0;
    return {ok, fmt("GOPC %s, GOCC %s, GOWT %s (bit-exact); eval(pred = gt) iou %.1f miou %.1f", gopc ? "ok" : "FAIL",
                    gocc ? "ok" : "FAIL", gowt ? "ok" : "FAIL", m.iou, m.miou)};
}

Outcome bench_sanity() {
    const std::vector<int> counts{128, 512, 2048};
    const auto pts = checks::bench_scaling(counts, 7, false);
    bool monotone = true;
    for (std::size_t i = 1; i < pts.size(); ++i) monotone = monotone && pts[i].splat_ms >= pts[i - 1].splat_ms;
    const double slope = std::log(pts.back().splat_ms / pts.front().splat_ms) / std::log(2048.0 / 128.0);
    return {monotone && slope < 2.0,
            fmt("splat_occupancy %.2f / %.2f / %.2f ms at N_G = 128 / 512 / 2048; monotone %s; log-log slope %.2f (< 2)",
                pts[0].splat_ms, pts[1].splat_ms, pts[2].splat_ms, monotone ? "yes" : "no", slope)};
}

} // namespace

int main(int argc, char** argv) {
    configure_runtime(0);
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> all{
        {1, "splat oracle equivalence", splat_oracle},
        {2, "gradient suite", gradient_suite},
        {3, "LCD identity oracle", lcd_identity},
        {4, "initialization properties", init_properties},
        {5, "metric correctness", metric_correctness},
        {6, "end-to-end toy training", end_to_end},
        {7, "ablation directionality", ablation_direction},
        {8, "format round-trips", format_round_trips},
        {9, "bench sanity", bench_sanity},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
