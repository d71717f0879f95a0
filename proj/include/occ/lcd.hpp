// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "occ/geom.hpp"
#include "occ/params.hpp"
#include "occ/rng.hpp"
#include "occ/scene.hpp"
#include "occ/spatial.hpp"

namespace occ::lcd {

/// Steps are 1-based: beta(t), alpha_bar(t) for t in 1..T.
struct NoiseSchedule {
    int steps = 0;
    std::vector<double> beta;
    std::vector<double> alpha_bar;

    double sigma(int t) const;  // sqrt(1 - alpha_bar(t))
};

NoiseSchedule make_schedule(int steps = 1000, double beta0 = 3e-5, double beta_end = 7e-3);

struct Perturbed {
    std::vector<Vec3> noised;
    std::vector<Vec3> eps;
};

/// x_t = x + sigma_t * eps with eps ~ N(0, I); the mean is not scaled.
Perturbed forward_perturb(std::span<const Vec3> targets, int t, const NoiseSchedule& sched, Rng& rng);
std::vector<Vec3> perturb_with(std::span<const Vec3> targets, std::span<const Vec3> eps, int t,
                               const NoiseSchedule& sched);

/// Sparse conditioning cloud (world frame) with its neighbor index.
class Condition {
  public:
    explicit Condition(std::vector<Vec3> points, std::vector<double> intensity = {});
    Condition(const Condition&) = delete;
    Condition& operator=(const Condition&) = delete;

    const std::vector<Vec3>& points() const { return points_; }
    const std::vector<double>& intensity() const { return intensity_; }
    const KdTree& index() const { return *index_; }

  private:
    std::vector<Vec3> points_;
    std::vector<double> intensity_;
    std::unique_ptr<KdTree> index_;
};

class Denoiser {
  public:
    virtual ~Denoiser() = default;
    /// Noise estimate for each noised point at step t.
    virtual std::vector<Vec3> predict(std::span<const Vec3> noised, const Condition& cond, int t) = 0;
};

/// Knows the clean points and returns the exact injected noise (x_t - x_0) / sigma_t.
class OracleDenoiser : public Denoiser {
  public:
    OracleDenoiser(std::vector<Vec3> clean, const NoiseSchedule& sched) : clean_(std::move(clean)), sched_(&sched) {}
    std::vector<Vec3> predict(std::span<const Vec3> noised, const Condition& cond, int t) override;

  private:
    std::vector<Vec3> clean_;
    const NoiseSchedule* sched_;
};

class ZeroDenoiser : public Denoiser {
  public:
    std::vector<Vec3> predict(std::span<const Vec3> noised, const Condition&, int) override {
        return std::vector<Vec3>(noised.size(), Vec3{0.0, 0.0, 0.0});
    }
};

struct MlpConfig {
    int layers = 3;   // linear layers
    int hidden = 64;
    int t_embed = 32;
    int knn = 8;
    double coord_scale = 0.1;
    double offset_clip = 4.0;
};

/// Per-point network over [coords * coord_scale; sinusoidal t-embedding; mean offset
/// to the knn nearest condition points / sigma_t; offset to the nearest / sigma_t],
/// both offsets clipped to +-offset_clip. A linear skip from the input features is
/// added to the output; its nearest-offset block starts at the identity.
class MlpDenoiser : public Denoiser {
  public:
    MlpDenoiser(const NoiseSchedule& sched, MlpConfig cfg, std::uint64_t seed);

    std::vector<Vec3> predict(std::span<const Vec3> noised, const Condition& cond, int t) override;

    std::size_t feature_dim() const;
    ad::Tensor features(std::span<const Vec3> noised, const Condition& cond, int t) const;
    /// [M, feature_dim] -> [M, 3] on the tape.
    ad::Var forward(const ad::Bound& params, ad::Var feats) const;

    ad::ParamStore& params() { return params_; }
    const ad::ParamStore& params() const { return params_; }
    const MlpConfig& config() const { return cfg_; }
    const NoiseSchedule& schedule() const { return *sched_; }

  private:
    const NoiseSchedule* sched_;
    MlpConfig cfg_;
    ad::ParamStore params_;
};

/// Mean over points and coordinates of (eps - eps_hat)^2 at one uniformly drawn t.
double diffusion_loss(Denoiser& denoiser, std::span<const Vec3> targets, const Condition& cond,
                      const NoiseSchedule& sched, Rng& rng);
/// Same loss on the tape, differentiable w.r.t. the network weights bound in `params`.
ad::Var diffusion_loss(const MlpDenoiser& net, const ad::Bound& params, std::span<const Vec3> targets,
                       const Condition& cond, Rng& rng);

enum class SampleMode { Deterministic, Ancestral };

/// The visited steps for `steps` uniform subsamples of 1..T, descending from T.
std::vector<int> sample_steps(int T, int steps);

/// Seeds x_T from the condition duplicated round-robin to n_out points plus noise of
/// std sigma_T, then applies x0_hat = x_t - sigma_t eps_hat and re-noises to the next
/// visited step (with eps_hat, or fresh noise in ancestral mode). Returns x0_hat of the
/// last step in the world frame, intensities copied from the seeds.
scene::PointCloud reverse_sample(Denoiser& denoiser, const Condition& cond, const NoiseSchedule& sched,
                                 std::size_t n_out, int steps, SampleMode mode, Rng& rng);

/// Seeds used by reverse_sample: condition points repeated round-robin to n_out.
std::vector<Vec3> duplicate_round_robin(std::span<const Vec3> points, std::size_t n_out);

struct TrainPair {
    std::vector<Vec3> sparse;  // P, world frame
    std::vector<Vec3> dense;   // T, world frame
};

struct TrainConfig {
    int epochs = 20;
    int iterations = 0;  // overrides epochs when > 0
    std::size_t batch = 512;
    double lr = 2e-4;
    int warmup = 100;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
};

/// Per-iteration training losses. An epoch is ceil(|T| / batch) iterations per pair.
std::vector<double> train_denoiser(MlpDenoiser& net, std::span<const TrainPair> corpus, const TrainConfig& cfg);

/// Average of diffusion_loss over `draws` independent draws; a stable held-out measure.
double evaluate_loss(Denoiser& denoiser, std::span<const Vec3> targets, const Condition& cond,
                     const NoiseSchedule& sched, std::uint64_t seed, int draws = 16);

} // namespace occ::lcd
