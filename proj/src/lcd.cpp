// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/lcd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "occ/error.hpp"
#include "occ/objectives.hpp"
#include "occ/ops.hpp"

namespace occ::lcd {

double NoiseSchedule::sigma(int t) const {
    require(t >= 1 && t <= steps, "noise schedule step out of range: " + std::to_string(t));
    return std::sqrt(1.0 - alpha_bar[static_cast<std::size_t>(t - 1)]);
}

NoiseSchedule make_schedule(int steps, double beta0, double beta_end) {
    require(steps >= 1, "make_schedule: T must be >= 1");
    require(beta0 > 0.0 && beta0 <= beta_end && beta_end < 1.0, "make_schedule: need 0 < beta0 <= betaT < 1");
    NoiseSchedule s;
    s.steps = steps;
    s.beta.resize(static_cast<std::size_t>(steps));
    s.alpha_bar.resize(static_cast<std::size_t>(steps));
    double prod = 1.0;
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
        const double b = beta0 + frac * (beta_end - beta0);
        prod *= 1.0 - b;
        s.beta[static_cast<std::size_t>(i)] = b;
        s.alpha_bar[static_cast<std::size_t>(i)] = prod;
    }
    return s;
}

std::vector<Vec3> perturb_with(std::span<const Vec3> targets, std::span<const Vec3> eps, int t,
                               const NoiseSchedule& sched) {
    require(targets.size() == eps.size(), "perturb: one noise vector per point required");
    const double sig = sched.sigma(t);
    std::vector<Vec3> out(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) out[i] = targets[i] + sig * eps[i];
    return out;
}

Perturbed forward_perturb(std::span<const Vec3> targets, int t, const NoiseSchedule& sched, Rng& rng) {
    Perturbed p;
    p.eps.resize(targets.size());
    for (auto& e : p.eps) e = {rng.normal(), rng.normal(), rng.normal()};
    p.noised = perturb_with(targets, p.eps, t, sched);
    return p;
}

Condition::Condition(std::vector<Vec3> points, std::vector<double> intensity)
    : points_(std::move(points)), intensity_(std::move(intensity)) {
    require(!points_.empty(), "lcd condition cloud is empty");
    if (intensity_.empty()) intensity_.assign(points_.size(), 0.0);
    require(intensity_.size() == points_.size(), "lcd condition needs one intensity per point");
    index_ = std::make_unique<KdTree>(points_);
}

std::vector<Vec3> OracleDenoiser::predict(std::span<const Vec3> noised, const Condition&, int t) {
    require(noised.size() == clean_.size(), "oracle denoiser: point count differs from its clean set");
    const double sig = sched_->sigma(t);
    std::vector<Vec3> out(noised.size());
    for (std::size_t i = 0; i < noised.size(); ++i) out[i] = (1.0 / sig) * (noised[i] - clean_[i]);
    return out;
}

namespace {

ad::Tensor init_weight(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0) {
    ad::Tensor w({in, out});
    const double lim = gain * std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& v : w.vec()) v = rng.uniform(-lim, lim);
    return w;
}

std::string layer_name(const char* kind, int i) { return std::string("lcd.") + kind + std::to_string(i); }

} // namespace

MlpDenoiser::MlpDenoiser(const NoiseSchedule& sched, MlpConfig cfg, std::uint64_t seed)
    : sched_(&sched), cfg_(cfg) {
    require(cfg.layers >= 1 && cfg.hidden >= 1 && cfg.knn >= 1, "mlp denoiser: bad config");
    require(cfg.t_embed >= 2 && cfg.t_embed % 2 == 0, "mlp denoiser: t_embed must be even and >= 2");
    Rng rng = Rng(seed).split("lcd.init");
    const std::size_t f = feature_dim();
    std::size_t in = f;
    for (int l = 0; l < cfg.layers; ++l) {
        const bool last = l == cfg.layers - 1;
        const std::size_t out = last ? 3 : static_cast<std::size_t>(cfg.hidden);
        params_.add(layer_name("W", l), init_weight(in, out, rng, last ? 0.1 : 1.0));
        params_.add(layer_name("b", l), ad::Tensor({out}, 0.0));
        in = out;
    }
    ad::Tensor skip({f, 3}, 0.0);
    for (std::size_t a = 0; a < 3; ++a) skip[(f - 3 + a) * 3 + a] = 1.0;
    params_.add("lcd.skip", std::move(skip));
}

std::size_t MlpDenoiser::feature_dim() const { return 3 + static_cast<std::size_t>(cfg_.t_embed) + 6; }

ad::Tensor MlpDenoiser::features(std::span<const Vec3> noised, const Condition& cond, int t) const {
    const std::size_t m = noised.size(), f = feature_dim();
    const double inv_sig = 1.0 / sched_->sigma(t);
    const auto half = static_cast<std::size_t>(cfg_.t_embed / 2);
    std::vector<double> emb(2 * half);
    for (std::size_t i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        emb[2 * i] = std::sin(t * freq);
        emb[2 * i + 1] = std::cos(t * freq);
    }
    const double clip = cfg_.offset_clip;
    auto clipped = [&](double v) { return std::clamp(v * inv_sig, -clip, clip); };
    ad::Tensor feats({std::max<std::size_t>(m, 1), f}, 0.0);
    const auto& pts = cond.points();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < m; ++i) {
        double* row = &feats[i * f];
        const Vec3& x = noised[i];
        for (int a = 0; a < 3; ++a) row[a] = x[a] * cfg_.coord_scale;
        std::copy(emb.begin(), emb.end(), row + 3);
        const auto nn = cond.index().knn(x, static_cast<std::size_t>(cfg_.knn));
        Vec3 mean{0.0, 0.0, 0.0};
        for (auto j : nn) mean = mean + pts[j];
        mean = (1.0 / static_cast<double>(nn.size())) * mean;
        const Vec3 near = pts[nn[0]];
        for (int a = 0; a < 3; ++a) {
            row[3 + 2 * half + a] = clipped(x[a] - mean[a]);
            row[3 + 2 * half + 3 + a] = clipped(x[a] - near[a]);
        }
    }
    return feats;
}

ad::Var MlpDenoiser::forward(const ad::Bound& params, ad::Var feats) const {
    ad::Var h = feats;
    for (int l = 0; l < cfg_.layers; ++l) {
        h = ad::linear(h, params[layer_name("W", l)], params[layer_name("b", l)]);
        if (l + 1 < cfg_.layers) h = ad::gelu(h);
    }
    return ad::add(h, ad::matmul(feats, params["lcd.skip"]));
}

std::vector<Vec3> MlpDenoiser::predict(std::span<const Vec3> noised, const Condition& cond, int t) {
    if (noised.empty()) return {};
    ad::Tape tape;
    ad::Bound bound(tape, params_);
    const auto out = forward(bound, tape.constant(features(noised, cond, t)));
    std::vector<Vec3> eps(noised.size());
    for (std::size_t i = 0; i < noised.size(); ++i) {
        eps[i] = {out.value()[i * 3], out.value()[i * 3 + 1], out.value()[i * 3 + 2]};
    }
    return eps;
}

namespace {
int draw_step(const NoiseSchedule& sched, Rng& rng) {
    return 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.steps)));
}
} // namespace

double diffusion_loss(Denoiser& denoiser, std::span<const Vec3> targets, const Condition& cond,
                      const NoiseSchedule& sched, Rng& rng) {
    require(!targets.empty(), "diffusion_loss: empty target set");
    const int t = draw_step(sched, rng);
    const auto p = forward_perturb(targets, t, sched, rng);
    const auto eps_hat = denoiser.predict(p.noised, cond, t);
    double total = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        for (int a = 0; a < 3; ++a) {
            const double d = p.eps[i][a] - eps_hat[i][a];
            total += d * d;
        }
    }
    return total / static_cast<double>(3 * targets.size());
}

ad::Var diffusion_loss(const MlpDenoiser& net, const ad::Bound& params, std::span<const Vec3> targets,
                       const Condition& cond, Rng& rng) {
    require(!targets.empty(), "diffusion_loss: empty target set");
    auto& tape = params.tape();
    const int t = draw_step(net.schedule(), rng);
    const auto p = forward_perturb(targets, t, net.schedule(), rng);
    ad::Tensor eps({targets.size(), 3});
    for (std::size_t i = 0; i < targets.size(); ++i) {
        for (int a = 0; a < 3; ++a) eps[i * 3 + static_cast<std::size_t>(a)] = p.eps[i][a];
    }
    const auto pred = net.forward(params, tape.constant(net.features(p.noised, cond, t)));
    const auto diff = ad::sub(pred, tape.constant(std::move(eps)));
    return ad::mean(ad::mul(diff, diff));
}

std::vector<int> sample_steps(int T, int steps) {
    require(steps >= 1, "reverse_sample: steps must be >= 1");
    require(steps <= T, "reverse_sample: steps must not exceed T");
    std::vector<int> out(static_cast<std::size_t>(steps));
    for (int k = 0; k < steps; ++k) {
        // ceil((steps - k) * T / steps): T, ..., T / steps; strictly decreasing since steps <= T.
        out[static_cast<std::size_t>(k)] =
            static_cast<int>((static_cast<long>(steps - k) * T + steps - 1) / steps);
    }
    return out;
}

std::vector<Vec3> duplicate_round_robin(std::span<const Vec3> points, std::size_t n_out) {
    require(!points.empty(), "duplicate: empty cloud");
    std::vector<Vec3> out(n_out);
    for (std::size_t i = 0; i < n_out; ++i) out[i] = points[i % points.size()];
    return out;
}

scene::PointCloud reverse_sample(Denoiser& denoiser, const Condition& cond, const NoiseSchedule& sched,
                                 std::size_t n_out, int steps, SampleMode mode, Rng& rng) {
    require(n_out >= cond.points().size(), "reverse_sample: n_out must be >= the condition point count");
    const auto visit = sample_steps(sched.steps, steps);
    const auto seeds = duplicate_round_robin(cond.points(), n_out);
    Rng seed_rng = rng.split("seed");
    Rng step_rng = rng.split("ancestral");

    std::vector<Vec3> x(n_out), x0(n_out);
    const double sig_t = sched.sigma(sched.steps);
    for (std::size_t i = 0; i < n_out; ++i) {
        x[i] = seeds[i] + sig_t * Vec3{seed_rng.normal(), seed_rng.normal(), seed_rng.normal()};
    }
    for (std::size_t k = 0; k < visit.size(); ++k) {
        const int t = visit[k];
        const double sig = sched.sigma(t);
        const auto eps_hat = denoiser.predict(x, cond, t);
        for (std::size_t i = 0; i < n_out; ++i) x0[i] = x[i] - sig * eps_hat[i];
        if (k + 1 == visit.size()) break;
        const double sig_next = sched.sigma(visit[k + 1]);
        for (std::size_t i = 0; i < n_out; ++i) {
            const Vec3 e = mode == SampleMode::Deterministic
                               ? eps_hat[i]
                               : Vec3{step_rng.normal(), step_rng.normal(), step_rng.normal()};
            x[i] = x0[i] + sig_next * e;
        }
    }
    scene::PointCloud out;
    out.points = std::move(x0);
    out.intensity.resize(n_out);
    for (std::size_t i = 0; i < n_out; ++i) out.intensity[i] = cond.intensity()[i % cond.points().size()];
    return out;
}

std::vector<double> train_denoiser(MlpDenoiser& net, std::span<const TrainPair> corpus, const TrainConfig& cfg) {
    require(!corpus.empty(), "train_denoiser: empty corpus");
    require(cfg.batch >= 1, "train_denoiser: batch must be >= 1");
    std::vector<std::unique_ptr<Condition>> conds;
    long per_epoch = 0;
    for (const auto& p : corpus) {
        require(!p.sparse.empty() && !p.dense.empty(), "train_denoiser: corpus pair with an empty cloud");
        conds.push_back(std::make_unique<Condition>(p.sparse));
        per_epoch += static_cast<long>((p.dense.size() + cfg.batch - 1) / cfg.batch);
    }
    const long iters = cfg.iterations > 0 ? cfg.iterations : static_cast<long>(cfg.epochs) * per_epoch;
    obj::AdamWConfig opt_cfg;
    opt_cfg.lr = cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    obj::AdamW opt(opt_cfg);
    obj::LrSchedule sched{cfg.lr, std::min(1e-6, cfg.lr), std::min<long>(cfg.warmup, iters / 2), iters};
    Rng rng = Rng(cfg.seed).split("lcd.train");

    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(iters));
    std::vector<Vec3> batch(cfg.batch);
    for (long it = 0; it < iters; ++it) {
        const auto& pair = corpus[static_cast<std::size_t>(it) % corpus.size()];
        const auto& cond = *conds[static_cast<std::size_t>(it) % corpus.size()];
        Rng step = rng.split(static_cast<std::uint64_t>(it));
        for (auto& b : batch) b = pair.dense[static_cast<std::size_t>(step.below(pair.dense.size()))];
        ad::Tape tape;
        ad::Bound bound(tape, net.params());
        const auto loss = diffusion_loss(net, bound, batch, cond, step);
        const double value = loss.value()[0];
        if (!std::isfinite(value)) throw NumericError("lcd training loss is not finite at iteration " + std::to_string(it));
        losses.push_back(value);
        tape.backward(loss);
        opt.step(net.params(), bound.grads(), obj::lr_at(it, sched));
    }
    return losses;
}

double evaluate_loss(Denoiser& denoiser, std::span<const Vec3> targets, const Condition& cond,
                     const NoiseSchedule& sched, std::uint64_t seed, int draws) {
    require(draws >= 1, "evaluate_loss: draws must be >= 1");
    Rng rng = Rng(seed).split("lcd.eval");
    double total = 0.0;
    for (int d = 0; d < draws; ++d) {
        Rng r = rng.split(static_cast<std::uint64_t>(d));
        total += diffusion_loss(denoiser, targets, cond, sched, r);
    }
    return total / draws;
}

} // namespace occ::lcd
