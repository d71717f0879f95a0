// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "occ/geom.hpp"
#include "occ/grid.hpp"
#include "occ/params.hpp"
#include "occ/scene.hpp"
#include "occ/tape.hpp"

namespace occ::gaf {

struct GafConfig {
    int d = 32;        // image feature width
    int d_pc = 32;     // voxel / anchor geometry feature width
    int num_classes = 6;
    std::vector<int> strides{4, 8, 16, 32};
    std::vector<double> radii{4.0, 8.0, 16.0, 32.0};  // R_l, in level-l map pixels
    int n_off = 9;
    int codebook = 32;  // M
    int offset_hidden = 32;
    int ffn_hidden = 128;
    int max_points_per_voxel = 10;  // T_p
    double k_geo = 1.5;
    double gamma = 3.0;
    double kappa = 1.0;
    double delta_max = 2.0;  // bound on the center update; <= 0 means unbounded
    double s_min = 0.05;
    int iterations = 1;
    bool guided_sampling = true;  // off: fixed 3x3 offset grid
    bool vlad = true;             // off: raw tokens are the attention slots

    std::size_t levels() const { return strides.size(); }
    void validate() const;
};

/// Occupied voxels in flat-index order with one feature row each.
struct SparseVoxelGrid {
    GridSpec spec;
    std::vector<std::array<int, 3>> coords;
    ad::Tensor features;  // [num_voxels, dim]

    std::size_t size() const { return coords.size(); }
    std::vector<Vec3> centers() const;
};

/// Per-voxel mean of psi(p) = [x, y, z relative to the voxel center in voxel units,
/// intensity, 1] over the first T_p points, zero-padded to d_pc. Points outside the grid are dropped.
SparseVoxelGrid voxelize(std::span<const Vec3> points, std::span<const double> intensity, const GridSpec& spec,
                         int max_points_per_voxel, int d_pc);

constexpr int kTaps = 27;
constexpr int kCenterTap = 13;
inline int tap_index(int dx, int dy, int dz) { return ((dx + 1) * 3 + (dy + 1)) * 3 + (dz + 1); }

/// For every tap, the row of the neighbor voxel (or -1) per output site.
struct Rulebook {
    std::vector<std::vector<std::int64_t>> taps;  // kTaps x num_voxels
};
Rulebook build_rulebook(const SparseVoxelGrid& grid);

/// Submanifold 3x3x3 convolution. weight: [27 * Cin, Cout] (tap-major rows), bias [Cout].
ad::Var sparse_conv(ad::Var features, ad::Var weight, ad::Var bias, const Rulebook& rules);

/// Two submanifold layers with gelu: parameters "enc.conv{0,1}.W/b".
ad::Var sparse_encode(ad::Var features, const ad::Bound& p, const Rulebook& rules);

/// Anchor-to-voxel pairs with voxel centers within R_geo = k * mean(scale) of the anchor.
struct Neighborhoods {
    std::vector<std::uint32_t> anchor;
    std::vector<std::uint32_t> voxel;
};
Neighborhoods find_neighborhoods(std::span<const Vec3> mu, std::span<const Vec3> scale,
                                 std::span<const Vec3> voxel_centers, double k_geo);

/// Weighted mean of voxel features with w = exp(-gamma |p_v - mu|); zero rows for anchors
/// without neighbors. mu [A,3], voxel_features [Nv, d_pc] -> [A, d_pc].
ad::Var anchor_geometry_feature(ad::Var mu, ad::Var voxel_features, std::span<const Vec3> voxel_centers,
                                const Neighborhoods& nb, double gamma);

struct Projection {
    double u = 0.0, v = 0.0, depth = 0.0;
    bool in_frustum = false;
};
Projection project(const Vec3& p, const scene::Camera& cam);
/// Differentiable pixel coordinates of mu [A,3] -> [A,2] (u, v). Rows behind the camera get zero
/// values and gradients.
ad::Var project(ad::Var mu, const scene::Camera& cam);

/// Fixed offsets used when guided sampling is disabled: a ceil(sqrt(n))^2 grid over [-0.5, 0.5]^2,
/// first n points; n = 9 gives {-0.5, 0, 0.5}^2.
std::vector<std::array<double, 2>> fixed_offsets(int n_off);

/// x_r = pix / stride + delta_r * radius, clamped to [0, W-1] x [0, H-1].
std::vector<std::array<double, 2>> guided_sample_locations(std::array<double, 2> pix,
                                                           std::span<const std::array<double, 2>> delta,
                                                           int stride, double radius, int map_w, int map_h);

/// Bilinear interpolation with border clamping. map: [H, W, d], loc: [N, 2] as (x, y) with
/// texel (i, j) at integer location (j, i) -> [N, d].
ad::Var bilinear_sample(ad::Var map, ad::Var loc);

/// Offset MLP: f_pc [A, d_pc] -> tanh offsets [A, n_off * 2].
ad::Var sample_offsets(ad::Var f_pc, const ad::Bound& p);

struct VladOutput {
    ad::Var z;            // [S, M, d]
    ad::Var log_weight;   // [S, M]: log(sum alpha w / sum alpha)
    ad::Var assignment;   // [N, M]
};

/// Geo-VLAD over tokens grouped into `num_segments` anchors. x [N, d], f_pc [S, d_pc], token_weight [N].
VladOutput geo_vlad(ad::Var x, ad::Var f_pc, ad::Var token_weight, const std::vector<std::uint32_t>& segment,
                    std::size_t num_segments, const ad::Bound& p);

/// z [A, M, d] -> gamma * z + beta, with (gamma - 1, beta) = linear(f_pc).
ad::Var film(ad::Var z, ad::Var f_pc, const ad::Bound& p);

/// Slots and slot log-biases for one level.
struct LevelSlots {
    ad::Var slots;      // [A, M, d]
    ad::Var log_bias;   // [A, M]
};

/// sum_l lambda_l softmax(q k^T / sqrt(d) + log w) v, masked by `visible` (one flag per anchor).
ad::Var fused_attention(ad::Var f_pc, const std::vector<LevelSlots>& levels, std::span<const std::uint8_t> visible,
                        const ad::Bound& p);

struct GaussianVars {
    ad::Var mu, log_scale, rot, sem;
};

/// FFN([f_pc; f_img]) -> (center offset, scale, rotation, logits).
GaussianVars update_gaussian(ad::Var mu, ad::Var f_pc, ad::Var f_img, const ad::Bound& p, const GafConfig& cfg);

/// Per view, one [H_l, W_l, d] map per level.
using FeaturePyramid = std::vector<ad::Var>;

struct GafInputs {
    const SparseVoxelGrid* voxels = nullptr;
    ad::Var voxel_features;  // [Nv, d_pc], encoded
    std::vector<FeaturePyramid> pyramids;
    std::vector<scene::Camera> cameras;
};

struct GafStats {
    std::size_t tokens = 0;
    std::size_t visible_anchors = 0;
};

/// Full refinement: cfg.iterations passes with shared parameters.
GaussianVars gaf_forward(const GaussianVars& in, const GafInputs& inputs, const ad::Bound& p, const GafConfig& cfg,
                         GafStats* stats = nullptr);

/// Trainable strided pyramid for one [H, W, 3] image in [0, 1]: level 0 embeds strides[0]-sized
/// RGB patches, each later level merges (strides[l] / strides[l-1])^2 cells of the one before;
/// linear + gelu per level with parameters "backbone.l{l}.W/b". H and W must be divisible by
/// the largest stride.
FeaturePyramid encode_image(const ad::Tensor& image, const ad::Bound& p, const GafConfig& cfg);

/// Every tensor gaf_forward, sparse_encode and encode_image read, randomly initialized; the FFN output layer
/// starts at zero weights with the quaternion bias at identity.
ad::ParamStore init_params(const GafConfig& cfg, std::uint64_t seed);

} // namespace occ::gaf
