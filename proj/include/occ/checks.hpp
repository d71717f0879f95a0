// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "occ/gaf.hpp"
#include "occ/gradcheck.hpp"
#include "occ/objectives.hpp"
#include "occ/ops.hpp"
#include "occ/rng.hpp"
#include "occ/splat.hpp"

namespace occ::checks {

/// Four anchors in front of one 8x8 camera, two pyramid levels, a 6x6x4 voxel grid.
struct SmallGaf {
    gaf::GafConfig cfg;
    GridSpec grid;
    gaf::SparseVoxelGrid voxels;
    gaf::Rulebook rules;
    scene::Camera cam;
    ad::Tensor image;
    ad::Tensor mu, log_scale, rot, sem;
    std::vector<std::uint8_t> labels;
    ad::ParamStore params;

    explicit SmallGaf(std::uint64_t seed = 7, bool ggs = true, bool gvr = true) {
        cfg.d = 4;
        cfg.d_pc = 6;
        cfg.num_classes = 3;
        cfg.strides = {2, 4};
        cfg.radii = {1.0, 1.0};
        cfg.n_off = 2;
        cfg.codebook = 3;
        cfg.offset_hidden = 5;
        cfg.ffn_hidden = 8;
        cfg.guided_sampling = ggs;
        cfg.vlad = gvr;
        grid.origin = {1.0, -1.5, -1.0};
        grid.voxel_size = 0.5;
        grid.dims = {6, 6, 4};

        Rng rng = Rng(seed).split("fixture");
        std::vector<Vec3> pts;
        std::vector<double> inten;
        for (int i = 0; i < 40; ++i) {
            pts.push_back({rng.uniform(1.2, 3.8), rng.uniform(-1.3, 1.3), rng.uniform(-0.8, 0.8)});
            inten.push_back(rng.uniform());
        }
        voxels = gaf::voxelize(pts, inten, grid, cfg.max_points_per_voxel, cfg.d_pc);
        rules = gaf::build_rulebook(voxels);
        cam = scene::default_cameras({0.0, 0.0, 0.0}, 1, 8)[0];

        image = ad::Tensor({8, 8, 3});
        for (auto& v : image.vec()) v = rng.uniform();
        mu = ad::Tensor({4, 3});
        log_scale = ad::Tensor({4, 3});
        rot = ad::Tensor({4, 4});
        sem = ad::Tensor({4, 3});
        for (std::size_t i = 0; i < 4; ++i) {
            mu[i * 3] = rng.uniform(2.0, 3.0);
            mu[i * 3 + 1] = rng.uniform(-0.8, 0.8);
            mu[i * 3 + 2] = rng.uniform(-0.5, 0.5);
            for (std::size_t k = 0; k < 3; ++k) log_scale[i * 3 + k] = std::log(rng.uniform(0.4, 0.8));
            rot[i * 4] = 1.0;
            for (std::size_t k = 0; k < 3; ++k) sem[i * 3 + k] = rng.normal();
        }
        labels.resize(grid.num_voxels());
        for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(3));

        params = gaf::init_params(cfg, seed);
        Rng prng = Rng(seed).split("perturb");
        for (auto& [name, t] : params) {
            for (auto& v : t.vec()) v += 0.3 * prng.normal();
        }
    }

    /// Splatted logits of the refined set.
    ad::Var logits(const ad::Bound& p, ad::Var m, ad::Var ls, ad::Var r, ad::Var c) const {
        ad::Tape& tape = p.tape();
        gaf::GafInputs in;
        in.voxels = &voxels;
        in.voxel_features = gaf::sparse_encode(tape.constant(voxels.features), p, rules);
        in.pyramids = {gaf::encode_image(image, p, cfg)};
        in.cameras = {cam};
        const gaf::GaussianVars out = gaf::gaf_forward({m, ls, r, c}, in, p, cfg);
        return splat::splat(out.mu, out.log_scale, out.rot, out.sem, grid);
    }

    /// CE + Lovasz-Softmax training loss on the refined set.
    ad::Var loss(const ad::Bound& p, ad::Var m, ad::Var ls, ad::Var r, ad::Var c) const {
        ad::Var lg = logits(p, m, ls, r, c);
        return ad::add(obj::cross_entropy(lg, labels), obj::lovasz_softmax(ad::softmax(lg), labels));
    }

    ad::Var loss(ad::Tape& tape) const {
        ad::Bound p(tape, params);
        return loss(p, tape.constant(mu), tape.constant(log_scale), tape.constant(rot), tape.constant(sem));
    }

    ad::Var ce_loss(const ad::Bound& p, ad::Var m, ad::Var ls, ad::Var r, ad::Var c) const {
        return obj::cross_entropy(logits(p, m, ls, r, c), labels);
    }

    struct CheckReport {
        double worst_tensor = 0.0;       // max over tensors of max|a - n| / max|a|
        std::string worst_tensor_name;
        double worst_elementwise = 0.0;  // max over components of |a - n| / max(|a|, |n|, 1e-8)
        std::string worst_element_name;
    };

    /// Cross-entropy gradcheck over every parameter tensor and the Gaussian inputs.
    CheckReport gradcheck_all() const {
        CheckReport rep;
        auto note = [&](const std::string& name, const ad::GradcheckResult& res) {
            if (res.tensor_rel_error() >= rep.worst_tensor) {
                rep.worst_tensor = res.tensor_rel_error();
                rep.worst_tensor_name = name;
            }
            if (res.max_rel_error >= rep.worst_elementwise) {
                rep.worst_elementwise = res.max_rel_error;
                rep.worst_element_name = name;
            }
        };
        for (const auto& [name, t] : params) {
            const auto res = ad::gradcheck(
                [&, n = name](ad::Tape& tape, ad::Var x) {
                    ad::Bound p(tape, params);
                    p.set(n, x);
                    return ce_loss(p, tape.constant(mu), tape.constant(log_scale), tape.constant(rot),
                                   tape.constant(sem));
                },
                t);
            note(name, res);
        }
        const std::vector<std::pair<std::string, const ad::Tensor*>> inputs{
            {"mu", &mu}, {"log_scale", &log_scale}, {"sem", &sem}};
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            const auto res = ad::gradcheck(
                [&, k](ad::Tape& tape, ad::Var x) {
                    ad::Bound p(tape, params);
                    ad::Var m = k == 0 ? x : tape.constant(mu);
                    ad::Var ls = k == 1 ? x : tape.constant(log_scale);
                    ad::Var c = k == 2 ? x : tape.constant(sem);
                    return ce_loss(p, m, ls, tape.constant(rot), c);
                },
                *inputs[k].second);
            note(inputs[k].first, res);
        }
        return rep;
    }
};

/// Gaussians with centers inside `grid`, scales in [0.2, 1], random rotations and logits in [-2, 2].
splat::GaussianSet random_gaussians(Rng& rng, std::size_t n, const GridSpec& grid, int num_classes);

struct NamedError {
    std::string name;
    double error = 0.0;
};

/// Finite-difference checks behind the gradient criterion.
struct GradientSuite {
    std::vector<NamedError> splat;      // CE(splat) w.r.t. mu, log_scale, sem
    SmallGaf::CheckReport gaf;          // CE of the refined splat w.r.t. all parameters
    std::vector<NamedError> diffusion;  // diffusion loss w.r.t. each denoiser weight
    double lovasz = 0.0;                // Lovasz-Softmax at a tie-free point

    double worst_splat() const;
    double worst_diffusion() const;
};

GradientSuite run_gradient_suite(bool with_gaf = true);

struct BenchPoint {
    std::size_t gaussians = 0;
    double splat_ms = 0.0;  // median splat_occupancy wall time
    double gaf_ms = 0.0;    // median gaf_forward wall time, 0 when skipped
    long peak_rss_kb = 0;
};

/// Times splat_occupancy on the 40x40x8 desk grid (and optionally gaf_forward on a desk scene)
/// for each Gaussian count, median of `reps` runs.
std::vector<BenchPoint> bench_scaling(std::span<const int> counts, int reps, bool with_gaf, std::uint64_t seed = 0);

long peak_rss_kb();

} // namespace occ::checks
