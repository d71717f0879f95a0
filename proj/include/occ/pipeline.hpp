// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "occ/gaf.hpp"
#include "occ/grid.hpp"
#include "occ/init.hpp"
#include "occ/lcd.hpp"
#include "occ/objectives.hpp"
#include "occ/params.hpp"
#include "occ/scene.hpp"
#include "occ/splat.hpp"

namespace occ::pipe {

struct LcdSettings {
    bool enabled = true;
    int T = 1000;
    double beta0 = 3e-5;
    double beta_T = 7e-3;
    int steps = 50;
    lcd::SampleMode mode = lcd::SampleMode::Deterministic;
    int n_out = 0;          // 0: four times the raw scan
    int epochs = 10;
    int iterations = 0;     // overrides epochs when > 0
    int batch = 256;
    double lr = 2e-3;
    int warmup = 50;
    lcd::MlpConfig mlp;
};

struct TrainSettings {
    double lr = 5e-3;
    double lr_min = 1e-5;
    int warmup = 25;
    int total_iters = 500;
    double weight_decay = 0.01;
    double lovasz_weight = 1.0;
};

struct RunConfig {
    std::uint64_t seed = 0;
    GridSpec grid;
    int num_classes = 6;
    std::string recipe = "1 ground + 6 boxes + 2 spheres";
    int sweeps = 20;
    double sweep_spacing = 0.6;
    double sensor_height = 1.5;
    int views = 4;
    int image_size = 128;
    double camera_height = 1.5;
    LcdSettings lcd;
    init::InitConfig init;
    gaf::GafConfig gaf;
    TrainSettings train;
    std::filesystem::path out_dir = "run";

    /// Throws ContractError when any downstream invariant fails.
    void validate() const;

    /// Sets one dotted key; throws ContractError for unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    /// Applies "key = value" lines; '#' starts a comment.
    void apply_text(const std::string& text);
    void apply_file(const std::filesystem::path& path);

    /// Every key with its current value, sorted by key.
    std::map<std::string, std::string> entries() const;
    /// "key = value\n" lines in key order; out_dir is excluded.
    std::string canonical() const;
    /// FNV-1a 64 of canonical(), 16 hex digits.
    std::string hash() const;
};

/// Every key RunConfig::set accepts, sorted.
std::vector<std::string> config_keys();

std::uint64_t fnv1a64(const std::string& bytes);

struct SceneData {
    scene::World world;
    OccupancyGrid gt;
    std::vector<scene::PointCloud> sweeps;
    scene::PointCloud raw;     // middle sweep, world frame
    scene::PointCloud target;  // all sweeps, world frame
    std::vector<scene::Camera> cameras;
    std::vector<ad::Tensor> images;
};

SceneData build_scene(const RunConfig& cfg);

/// Trains a denoiser on the (raw, target) pair and returns P'. With LCD disabled, returns raw.
scene::PointCloud complete_cloud(const RunConfig& cfg, const scene::PointCloud& raw, const scene::PointCloud& target);
scene::PointCloud complete_cloud(const RunConfig& cfg, const SceneData& data);

/// Reverse sampling with the exact-noise oracle for `target`: |target| outputs that equal the target.
scene::PointCloud complete_with_oracle(const RunConfig& cfg, const scene::PointCloud& raw,
                                       const scene::PointCloud& target);

/// Gaussian sets travel as GOWT files with tensors "gaussians.{mu,log_scale,rot,sem}".
void save_gaussians(const std::filesystem::path& path, const splat::GaussianSet& set);
splat::GaussianSet load_gaussians(const std::filesystem::path& path);

init::InitResult init_from_cloud(const RunConfig& cfg, const scene::PointCloud& cloud);

/// Everything the joint training step consumes for one scene.
struct TrainingSet {
    gaf::SparseVoxelGrid voxels;
    gaf::Rulebook rules;
    splat::GaussianTensors initial;
    std::vector<ad::Tensor> images;
    std::vector<scene::Camera> cameras;
    std::vector<std::uint8_t> labels;
};

TrainingSet make_training_set(const RunConfig& cfg, const scene::PointCloud& completed,
                              const splat::GaussianSet& gaussians, const SceneData& data);

/// Splatted logits [V, C] of the refined Gaussians.
ad::Var forward_logits(const ad::Bound& p, const TrainingSet& ts, const RunConfig& cfg);

struct TrainResult {
    ad::ParamStore params;
    std::vector<double> losses;
};

/// Joint CE + Lovasz training with AdamW; throws NumericError on a non-finite loss or gradient.
TrainResult train(const RunConfig& cfg, const TrainingSet& ts, ad::ParamStore params);

/// Refined Gaussians (no tape kept).
splat::GaussianSet refine(const ad::ParamStore& params, const TrainingSet& ts, const RunConfig& cfg);

OccupancyGrid predict(const ad::ParamStore& params, const TrainingSet& ts, const RunConfig& cfg);

struct Metrics {
    double iou = 0.0;
    double miou = 0.0;
    std::vector<obj::ClassIou> per_class;
};
Metrics evaluate(const OccupancyGrid& pred, const OccupancyGrid& gt);

struct RunReport {
    Metrics metrics;
    Metrics untrained;
    double chamfer_raw = 0.0;        // Chamfer(P, T)
    double chamfer_completed = 0.0;  // Chamfer(P', T)
    double final_loss = 0.0;
    std::size_t gaussians = 0;
    std::string config_hash;
    double wall_ms = 0.0;

    /// JSON object with sorted keys.
    std::string to_json() const;
};

/// gen-scene -> simulate-lidar -> aggregate -> LCD -> init -> train -> predict -> eval. Writes
/// gt.gocc, raw.gopc, target.gopc, completed.gopc, model.gowt, pred.gocc and report.json into
/// cfg.out_dir. A failing stage rethrows with "stage <name>: " prefixed.
RunReport run_pipeline(const RunConfig& cfg);

} // namespace occ::pipe
