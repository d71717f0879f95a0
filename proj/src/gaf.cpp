// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/gaf.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>

#include "occ/error.hpp"
#include "occ/ops.hpp"
#include "occ/rng.hpp"
#include "occ/spatial.hpp"

namespace occ::gaf {

using ad::Shape;
using ad::Tensor;
using ad::Var;

void GafConfig::validate() const {
    require(d >= 1 && d_pc >= 5, "gaf: d must be >= 1 and d_pc >= 5");
    require(num_classes >= 2, "gaf: need at least two classes");
    require(!strides.empty() && strides.size() == radii.size(), "gaf: one radius per pyramid level required");
    for (std::size_t l = 0; l < strides.size(); ++l) {
        require(strides[l] >= 1 && (l == 0 || strides[l] > strides[l - 1]), "gaf: strides must increase strictly");
        require(l == 0 || strides[l] % strides[l - 1] == 0, "gaf: each stride must divide the next");
        require(radii[l] > 0.0, "gaf: radii must be positive");
    }
    require(n_off >= 1 && codebook >= 1 && offset_hidden >= 1 && ffn_hidden >= 1, "gaf: sizes must be >= 1");
    require(max_points_per_voxel >= 1, "gaf: T_p must be >= 1");
    require(k_geo > 0.0 && gamma >= 0.0 && kappa > 0.0, "gaf: k, gamma, kappa out of range");
    require(s_min > 0.0, "gaf: s_min must be positive");
    require(iterations >= 1, "gaf: iterations must be >= 1");
}

std::vector<Vec3> SparseVoxelGrid::centers() const {
    std::vector<Vec3> out(coords.size());
    for (std::size_t i = 0; i < coords.size(); ++i) out[i] = spec.center(coords[i][0], coords[i][1], coords[i][2]);
    return out;
}

SparseVoxelGrid voxelize(std::span<const Vec3> points, std::span<const double> intensity, const GridSpec& spec,
                         int max_points_per_voxel, int d_pc) {
    require(max_points_per_voxel >= 1, "voxelize: T_p must be >= 1");
    require(d_pc >= 5, "voxelize: d_pc must be >= 5");
    require(intensity.empty() || intensity.size() == points.size(), "voxelize: one intensity per point or none");
    struct Acc {
        std::array<double, 5> sum{};
        int count = 0;
    };
    std::map<std::size_t, Acc> cells;
    for (std::size_t i = 0; i < points.size(); ++i) {
        const auto c = spec.cell_of(points[i]);
        if (!spec.inside(c)) continue;
        auto& acc = cells[spec.index(c[0], c[1], c[2])];
        if (acc.count >= max_points_per_voxel) continue;
        const Vec3 rel = (1.0 / spec.voxel_size) * (points[i] - spec.center(c[0], c[1], c[2]));
        const std::array<double, 5> psi{rel[0], rel[1], rel[2], intensity.empty() ? 0.0 : intensity[i], 1.0};
        for (int k = 0; k < 5; ++k) acc.sum[k] += psi[k];
        ++acc.count;
    }
    SparseVoxelGrid out;
    out.spec = spec;
    const auto dp = static_cast<std::size_t>(d_pc);
    if (cells.empty()) return out;
    out.features = Tensor({cells.size(), dp});
    std::size_t row = 0;
    for (const auto& [flat, acc] : cells) {
        out.coords.push_back(spec.coords(flat));
        for (int k = 0; k < 5; ++k) out.features[row * dp + k] = acc.sum[k] / acc.count;
        ++row;
    }
    return out;
}

Rulebook build_rulebook(const SparseVoxelGrid& grid) {
    std::unordered_map<std::size_t, std::int64_t> row_of;
    row_of.reserve(grid.size() * 2);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& c = grid.coords[i];
        row_of.emplace(grid.spec.index(c[0], c[1], c[2]), static_cast<std::int64_t>(i));
    }
    Rulebook rb;
    rb.taps.assign(kTaps, std::vector<std::int64_t>(grid.size(), -1));
    for (int dx = -1; dx <= 1; ++dx) {
        for (int dy = -1; dy <= 1; ++dy) {
            for (int dz = -1; dz <= 1; ++dz) {
                auto& tap = rb.taps[static_cast<std::size_t>(tap_index(dx, dy, dz))];
                for (std::size_t i = 0; i < grid.size(); ++i) {
                    const auto& c = grid.coords[i];
                    const std::array<int, 3> n{c[0] + dx, c[1] + dy, c[2] + dz};
                    if (!grid.spec.inside(n)) continue;
                    auto it = row_of.find(grid.spec.index(n[0], n[1], n[2]));
                    if (it != row_of.end()) tap[i] = it->second;
                }
            }
        }
    }
    return rb;
}

Var sparse_conv(Var features, Var weight, Var bias, const Rulebook& rules) {
    require(rules.taps.size() == kTaps, "sparse_conv: rulebook must have 27 taps");
    const auto& f = features.value();
    require(f.rank() == 2 && rules.taps[0].size() == f.dim(0), "sparse_conv: features must be [Nv, Cin]");
    require(weight.value().rank() == 2 && weight.value().dim(0) == kTaps * f.dim(1),
            "sparse_conv: weight must be [27 * Cin, Cout]");
    std::vector<Var> cols;
    cols.reserve(kTaps);
    for (const auto& tap : rules.taps) cols.push_back(ad::gather_rows(features, tap));
    return ad::linear(ad::concat(cols), weight, bias);
}

Var sparse_encode(Var features, const ad::Bound& p, const Rulebook& rules) {
    Var h = ad::gelu(sparse_conv(features, p["enc.conv0.W"], p["enc.conv0.b"], rules));
    return ad::gelu(sparse_conv(h, p["enc.conv1.W"], p["enc.conv1.b"], rules));
}

Neighborhoods find_neighborhoods(std::span<const Vec3> mu, std::span<const Vec3> scale,
                                 std::span<const Vec3> voxel_centers, double k_geo) {
    require(mu.size() == scale.size(), "find_neighborhoods: one scale per anchor required");
    Neighborhoods nb;
    if (voxel_centers.empty() || mu.empty()) return nb;
    std::vector<double> radius(mu.size());
    double mean_r = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        radius[i] = k_geo * (scale[i][0] + scale[i][1] + scale[i][2]) / 3.0;
        mean_r += radius[i];
    }
    mean_r /= static_cast<double>(mu.size());
    const SpatialHash hash(voxel_centers, std::max(mean_r, 1e-3));
    std::vector<std::vector<std::size_t>> per(mu.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::size_t i = 0; i < mu.size(); ++i) {
        per[i] = hash.radius(mu[i], radius[i]);
    }
    for (std::size_t i = 0; i < mu.size(); ++i) {
        for (auto v : per[i]) {
            nb.anchor.push_back(static_cast<std::uint32_t>(i));
            nb.voxel.push_back(static_cast<std::uint32_t>(v));
        }
    }
    return nb;
}

Var anchor_geometry_feature(Var mu, Var voxel_features, std::span<const Vec3> voxel_centers, const Neighborhoods& nb,
                            double gamma) {
    const auto& m = mu.value();
    const auto& f = voxel_features.value();
    require(m.rank() == 2 && m.dim(1) == 3, "anchor_geometry_feature: mu must be [A, 3]");
    require(nb.anchor.size() == nb.voxel.size(), "anchor_geometry_feature: malformed neighborhoods");
    const std::size_t a = m.dim(0);
    require(f.rank() == 2 && f.dim(0) == voxel_centers.size(),
            "anchor_geometry_feature: voxel features must be [Nv, d_pc] with one center per row");
    const std::size_t d = f.dim(1);

    std::vector<std::size_t> start(a + 1, 0);
    for (std::size_t k = 0; k < nb.anchor.size(); ++k) {
        require(nb.anchor[k] < a && nb.voxel[k] < voxel_centers.size(), "anchor_geometry_feature: index out of range");
        require(k == 0 || nb.anchor[k] >= nb.anchor[k - 1], "anchor_geometry_feature: pairs must be grouped by anchor");
        ++start[nb.anchor[k] + 1];
    }
    for (std::size_t i = 0; i < a; ++i) start[i + 1] += start[i];

    std::vector<double> w(nb.anchor.size()), dist(nb.anchor.size()), wsum(a, 0.0);
    Tensor y({a, d});
#pragma omp parallel for schedule(dynamic, 16)
    for (std::size_t i = 0; i < a; ++i) {
        const Vec3 mi{m[i * 3], m[i * 3 + 1], m[i * 3 + 2]};
        double s = 0.0;
        for (std::size_t k = start[i]; k < start[i + 1]; ++k) {
            dist[k] = norm(voxel_centers[nb.voxel[k]] - mi);
            w[k] = std::exp(-gamma * dist[k]);
            s += w[k];
        }
        wsum[i] = s;
        if (s <= 0.0) continue;
        for (std::size_t k = start[i]; k < start[i + 1]; ++k) {
            const double* fv = &f[nb.voxel[k] * d];
            for (std::size_t j = 0; j < d; ++j) y[i * d + j] += w[k] * fv[j] / s;
        }
    }
    std::vector<Vec3> centers(voxel_centers.begin(), voxel_centers.end());
    return mu.tape->record(
        "anchor_geometry_feature", y, {mu, voxel_features},
        [nb, start, w, dist, wsum, y, centers = std::move(centers), gamma, a, d, mu, voxel_features](
            const Tensor& g, std::span<Tensor* const> pg) {
            auto* gm = pg[0];
            auto* gf = pg[1];
            const auto& mval = mu.value();
            const auto& fval = voxel_features.value();
            for (std::size_t i = 0; i < a; ++i) {
                if (wsum[i] <= 0.0) continue;
                const Vec3 mi{mval[i * 3], mval[i * 3 + 1], mval[i * 3 + 2]};
                for (std::size_t k = start[i]; k < start[i + 1]; ++k) {
                    const std::size_t v = nb.voxel[k];
                    if (gf) {
                        for (std::size_t j = 0; j < d; ++j) (*gf)[v * d + j] += w[k] / wsum[i] * g[i * d + j];
                    }
                    if (gm && dist[k] > 0.0) {
                        double c = 0.0;
                        for (std::size_t j = 0; j < d; ++j) c += g[i * d + j] * (fval[v * d + j] - y[i * d + j]);
                        c *= w[k] * gamma / (wsum[i] * dist[k]);
                        const Vec3 diff = centers[v] - mi;
                        for (int ax = 0; ax < 3; ++ax) (*gm)[i * 3 + ax] += c * diff[ax];
                    }
                }
            }
        });
}

Projection project(const Vec3& p, const scene::Camera& cam) {
    const Vec3 pc = cam.world_to_camera.apply(p);
    Projection out;
    out.depth = pc[2];
    if (pc[2] <= 0.0) return out;
    out.u = cam.fx * pc[0] / pc[2] + cam.cx;
    out.v = cam.fy * pc[1] / pc[2] + cam.cy;
    out.in_frustum = out.u >= 0.0 && out.u < cam.width && out.v >= 0.0 && out.v < cam.height;
    return out;
}

Var project(Var mu, const scene::Camera& cam) {
    const auto& m = mu.value();
    require(m.rank() == 2 && m.dim(1) == 3, "project: mu must be [A, 3]");
    const std::size_t a = m.dim(0);
    const Mat3 r = quat_to_rot(cam.world_to_camera.rotation);
    Tensor y({a, 2});
    std::vector<Vec3> pcs(a);
    for (std::size_t i = 0; i < a; ++i) {
        pcs[i] = cam.world_to_camera.apply({m[i * 3], m[i * 3 + 1], m[i * 3 + 2]});
        if (pcs[i][2] <= 0.0) continue;
        y[i * 2] = cam.fx * pcs[i][0] / pcs[i][2] + cam.cx;
        y[i * 2 + 1] = cam.fy * pcs[i][1] / pcs[i][2] + cam.cy;
    }
    return mu.tape->record("project", std::move(y), {mu},
                           [pcs = std::move(pcs), r, fx = cam.fx, fy = cam.fy, a](const Tensor& g,
                                                                                  std::span<Tensor* const> pg) {
                               auto* gm = pg[0];
                               if (!gm) return;
                               for (std::size_t i = 0; i < a; ++i) {
                                   const Vec3& pc = pcs[i];
                                   if (pc[2] <= 0.0) continue;
                                   const double iz = 1.0 / pc[2];
                                   const double gu = g[i * 2], gv = g[i * 2 + 1];
                                   const Vec3 gpc{gu * fx * iz, gv * fy * iz,
                                                  -(gu * fx * pc[0] + gv * fy * pc[1]) * iz * iz};
                                   const Vec3 gw = mat_t_vec(r, gpc);
                                   for (int ax = 0; ax < 3; ++ax) (*gm)[i * 3 + ax] += gw[ax];
                               }
                           });
}

std::vector<std::array<double, 2>> fixed_offsets(int n_off) {
    require(n_off >= 1, "fixed_offsets: n_off must be >= 1");
    const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n_off)) - 1e-12));
    std::vector<std::array<double, 2>> out;
    for (int a = 0; a < side && static_cast<int>(out.size()) < n_off; ++a) {
        for (int b = 0; b < side && static_cast<int>(out.size()) < n_off; ++b) {
            const double ya = side == 1 ? 0.0 : -0.5 + static_cast<double>(a) / (side - 1);
            const double xb = side == 1 ? 0.0 : -0.5 + static_cast<double>(b) / (side - 1);
            out.push_back({xb, ya});
        }
    }
    return out;
}

std::vector<std::array<double, 2>> guided_sample_locations(std::array<double, 2> pix,
                                                           std::span<const std::array<double, 2>> delta,
                                                           int stride, double radius, int map_w, int map_h) {
    require(stride >= 1 && map_w >= 1 && map_h >= 1, "guided_sample_locations: bad map geometry");
    std::vector<std::array<double, 2>> out;
    out.reserve(delta.size());
    for (const auto& dl : delta) {
        const double x = pix[0] / stride + dl[0] * radius;
        const double y = pix[1] / stride + dl[1] * radius;
        out.push_back({std::clamp(x, 0.0, map_w - 1.0), std::clamp(y, 0.0, map_h - 1.0)});
    }
    return out;
}

namespace {

struct Tokens {
    std::vector<std::uint32_t> anchor, view, r;
    std::size_t size() const { return anchor.size(); }
};

/// loc[n] = pix[view][anchor] / stride + delta[anchor, r] * radius, optionally clamped.
Var token_locations(const std::vector<Var>& pix, const Var* delta, const Tokens& tok, double stride, double radius,
                    int map_w, int map_h, bool clamp) {
    const std::size_t n = tok.size();
    Tensor y({n, 2});
    std::vector<std::uint8_t> clamped(n * 2, 0);
    const double lim[2] = {map_w - 1.0, map_h - 1.0};
    const std::size_t dw = delta ? delta->value().dim(1) : 0;
    for (std::size_t t = 0; t < n; ++t) {
        const auto& pv = pix[tok.view[t]].value();
        for (std::size_t c = 0; c < 2; ++c) {
            double val = pv[tok.anchor[t] * 2 + c] / stride;
            if (delta) val += delta->value()[tok.anchor[t] * dw + tok.r[t] * 2 + c] * radius;
            if (clamp && (val < 0.0 || val > lim[c])) {
                val = std::clamp(val, 0.0, lim[c]);
                clamped[t * 2 + c] = 1;
            }
            y[t * 2 + c] = val;
        }
    }
    std::vector<Var> parents = pix;
    if (delta) parents.push_back(*delta);
    const std::size_t nv = pix.size();
    return pix[0].tape->record(
        "token_locations", std::move(y), std::move(parents),
        [tok, clamped = std::move(clamped), stride, radius, nv, dw, has_delta = delta != nullptr](
            const Tensor& g, std::span<Tensor* const> pg) {
            for (std::size_t t = 0; t < tok.size(); ++t) {
                for (std::size_t c = 0; c < 2; ++c) {
                    if (clamped[t * 2 + c]) continue;
                    const double gt = g[t * 2 + c];
                    if (auto* gp = pg[tok.view[t]]) (*gp)[tok.anchor[t] * 2 + c] += gt / stride;
                    if (has_delta) {
                        if (auto* gd = pg[nv]) (*gd)[tok.anchor[t] * dw + tok.r[t] * 2 + c] += gt * radius;
                    }
                }
            }
        });
}

struct Corners {
    std::size_t i00, i01, i10, i11;
    double fx, fy;
};

Corners corners(double x, double y, std::size_t w, std::size_t h) {
    const double x0 = std::floor(x), y0 = std::floor(y);
    const auto cx = [w](double v) { return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(w - 1))); };
    const auto cy = [h](double v) { return static_cast<std::size_t>(std::clamp(v, 0.0, static_cast<double>(h - 1))); };
    const std::size_t xa = cx(x0), xb = cx(x0 + 1.0), ya = cy(y0), yb = cy(y0 + 1.0);
    return {ya * w + xa, ya * w + xb, yb * w + xa, yb * w + xb, x - x0, y - y0};
}

/// Bilinear sampling of token n from maps[map_of[n]]; all maps share one shape.
Var sample_maps(const std::vector<Var>& maps, Var loc, std::vector<std::uint32_t> map_of) {
    const Shape& ms = maps.at(0).value().shape();
    require(ms.size() == 3, "bilinear_sample: map must be [H, W, d]");
    for (const auto& m : maps) require(m.value().shape() == ms, "bilinear_sample: maps differ in shape");
    const auto& l = loc.value();
    require(l.rank() == 2 && l.dim(1) == 2 && map_of.size() == l.dim(0), "bilinear_sample: loc must be [N, 2]");
    const std::size_t n = l.dim(0), h = ms[0], w = ms[1], d = ms[2];
    for (std::size_t t = 0; t < n; ++t) {
        if (!std::isfinite(l[t * 2]) || !std::isfinite(l[t * 2 + 1])) {
            throw NumericError("bilinear_sample: non-finite sampling location");
        }
        require(map_of[t] < maps.size(), "bilinear_sample: map index out of range");
    }
    Tensor y({n, d});
#pragma omp parallel for schedule(static)
    for (std::size_t t = 0; t < n; ++t) {
        const auto& m = maps[map_of[t]].value();
        const Corners c = corners(l[t * 2], l[t * 2 + 1], w, h);
        const double w00 = (1 - c.fx) * (1 - c.fy), w01 = c.fx * (1 - c.fy), w10 = (1 - c.fx) * c.fy,
                     w11 = c.fx * c.fy;
        for (std::size_t j = 0; j < d; ++j) {
            y[t * d + j] = w00 * m[c.i00 * d + j] + w01 * m[c.i01 * d + j] + w10 * m[c.i10 * d + j] +
                           w11 * m[c.i11 * d + j];
        }
    }
    std::vector<Var> parents = maps;
    parents.push_back(loc);
    const std::size_t nm = maps.size();
    return loc.tape->record(
        "bilinear_sample", std::move(y), std::move(parents),
        [maps, loc, map_of = std::move(map_of), n, h, w, d, nm](const Tensor& g, std::span<Tensor* const> pg) {
            auto* gl = pg[nm];
            const auto& lv = loc.value();
            for (std::size_t t = 0; t < n; ++t) {
                const Tensor& m = maps[map_of[t]].value();
                const Corners c = corners(lv[t * 2], lv[t * 2 + 1], w, h);
                const double* gt = &g[t * d];
                if (auto* gm = pg[map_of[t]]) {
                    const double w00 = (1 - c.fx) * (1 - c.fy), w01 = c.fx * (1 - c.fy), w10 = (1 - c.fx) * c.fy,
                                 w11 = c.fx * c.fy;
                    for (std::size_t j = 0; j < d; ++j) {
                        (*gm)[c.i00 * d + j] += w00 * gt[j];
                        (*gm)[c.i01 * d + j] += w01 * gt[j];
                        (*gm)[c.i10 * d + j] += w10 * gt[j];
                        (*gm)[c.i11 * d + j] += w11 * gt[j];
                    }
                }
                if (gl) {
                    double gx = 0.0, gy = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double v00 = m[c.i00 * d + j], v01 = m[c.i01 * d + j], v10 = m[c.i10 * d + j],
                                     v11 = m[c.i11 * d + j];
                        gx += gt[j] * ((1 - c.fy) * (v01 - v00) + c.fy * (v11 - v10));
                        gy += gt[j] * ((1 - c.fx) * (v10 - v00) + c.fx * (v11 - v01));
                    }
                    (*gl)[t * 2] += gx;
                    (*gl)[t * 2 + 1] += gy;
                }
            }
        });
}

/// Row-wise unit quaternion; rows with norm < 1e-8 become the identity with zero gradient.
Var quat_or_identity(Var q) {
    const auto& x = q.value();
    require(x.rank() == 2 && x.dim(1) == 4, "quat_or_identity: expects [A, 4]");
    const std::size_t a = x.dim(0);
    Tensor y({a, 4});
    std::vector<double> norms(a);
    for (std::size_t i = 0; i < a; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 4; ++j) s += x[i * 4 + j] * x[i * 4 + j];
        norms[i] = std::sqrt(s);
        if (norms[i] < 1e-8) {
            y[i * 4] = 1.0;
            continue;
        }
        for (std::size_t j = 0; j < 4; ++j) y[i * 4 + j] = x[i * 4 + j] / norms[i];
    }
    return q.tape->record("quat_or_identity", y, {q},
                          [y, norms = std::move(norms), a](const Tensor& g, std::span<Tensor* const> pg) {
                              auto* gq = pg[0];
                              if (!gq) return;
                              for (std::size_t i = 0; i < a; ++i) {
                                  if (norms[i] < 1e-8) continue;
                                  double dotp = 0.0;
                                  for (std::size_t j = 0; j < 4; ++j) dotp += g[i * 4 + j] * y[i * 4 + j];
                                  for (std::size_t j = 0; j < 4; ++j) {
                                      (*gq)[i * 4 + j] += (g[i * 4 + j] - y[i * 4 + j] * dotp) / norms[i];
                                  }
                              }
                          });
}

Var column(Var v) { return ad::reshape(v, {v.value().numel(), 1}); }

Var constant_like_rows(ad::Tape& tape, std::size_t rows, std::size_t cols, double fill) {
    return tape.constant(Tensor({rows, cols}, fill));
}

// y[s, m, :] = wx[s, m, :] - mass[s, m] * codebook[m, :]
Var vlad_residual(Var wx, Var mass, Var codebook) {
    const auto& x = wx.value();
    const std::size_t sn = x.dim(0), m = x.dim(1), d = x.dim(2);
    const auto& ms = mass.value();
    const auto& cb = codebook.value();
    Tensor y(x.shape());
    for (std::size_t s = 0; s < sn; ++s) {
        for (std::size_t k = 0; k < m; ++k) {
            const double w = ms[s * m + k];
            const std::size_t row = (s * m + k) * d;
            for (std::size_t j = 0; j < d; ++j) y[row + j] = x[row + j] - w * cb[k * d + j];
        }
    }
    return wx.tape->record("vlad_residual", std::move(y), {wx, mass, codebook},
                           [mass, codebook, sn, m, d](const Tensor& g, std::span<Tensor* const> pg) {
                               const auto& ms = mass.value();
                               const auto& cb = codebook.value();
                               if (auto* gx = pg[0]) {
                                   for (std::size_t i = 0; i < g.numel(); ++i) (*gx)[i] += g[i];
                               }
                               for (std::size_t s = 0; s < sn; ++s) {
                                   for (std::size_t k = 0; k < m; ++k) {
                                       const std::size_t row = (s * m + k) * d;
                                       if (auto* gm = pg[1]) {
                                           double acc = 0.0;
                                           for (std::size_t j = 0; j < d; ++j) acc += g[row + j] * cb[k * d + j];
                                           (*gm)[s * m + k] -= acc;
                                       }
                                       if (auto* gc = pg[2]) {
                                           const double w = ms[s * m + k];
                                           for (std::size_t j = 0; j < d; ++j) (*gc)[k * d + j] -= w * g[row + j];
                                       }
                                   }
                               }
                           });
}

// y[a, m, :] = z[a, m, :] * gamma[a, :] + beta[a, :]
Var film_apply(Var z, Var gamma, Var beta) {
    const auto& x = z.value();
    const std::size_t an = x.dim(0), m = x.dim(1), d = x.dim(2);
    const auto& gv = gamma.value();
    const auto& bv = beta.value();
    Tensor y(x.shape());
    for (std::size_t a = 0; a < an; ++a) {
        for (std::size_t k = 0; k < m; ++k) {
            const std::size_t row = (a * m + k) * d;
            for (std::size_t j = 0; j < d; ++j) y[row + j] = x[row + j] * gv[a * d + j] + bv[a * d + j];
        }
    }
    return z.tape->record("film", std::move(y), {z, gamma, beta},
                          [z, gamma, an, m, d](const Tensor& g, std::span<Tensor* const> pg) {
                              const auto& x = z.value();
                              const auto& gv = gamma.value();
                              for (std::size_t a = 0; a < an; ++a) {
                                  for (std::size_t k = 0; k < m; ++k) {
                                      const std::size_t row = (a * m + k) * d;
                                      for (std::size_t j = 0; j < d; ++j) {
                                          const double go = g[row + j];
                                          if (pg[0]) (*pg[0])[row + j] += go * gv[a * d + j];
                                          if (pg[1]) (*pg[1])[a * d + j] += go * x[row + j];
                                          if (pg[2]) (*pg[2])[a * d + j] += go;
                                      }
                                  }
                              }
                          });
}

} // namespace

Var bilinear_sample(Var map, Var loc) {
    return sample_maps({map}, loc, std::vector<std::uint32_t>(loc.value().dim(0), 0));
}

Var sample_offsets(Var f_pc, const ad::Bound& p) {
    Var h = ad::tanh(ad::linear(f_pc, p["gaf.offset.W0"], p["gaf.offset.b0"]));
    return ad::tanh(ad::linear(h, p["gaf.offset.W1"], p["gaf.offset.b1"]));
}

VladOutput geo_vlad(Var x, Var f_pc, Var token_weight, const std::vector<std::uint32_t>& segment,
                    std::size_t num_segments, const ad::Bound& p) {
    const auto& xv = x.value();
    require(xv.rank() == 2 && xv.dim(0) >= 1, "geo_vlad: x must be [N >= 1, d]");
    require(token_weight.value().numel() == xv.dim(0), "geo_vlad: one weight per token required");
    const std::size_t d = xv.dim(1);
    Var codebook = p["gaf.codebook"];
    require(codebook.value().rank() == 2 && codebook.value().dim(1) == d, "geo_vlad: codebook must be [M, d]");
    const std::size_t m = codebook.value().dim(0);

    Var anchor_term = ad::linear(f_pc, p["gaf.Ua"], p["gaf.ba"]);  // [S, M]
    std::vector<std::int64_t> rows(segment.begin(), segment.end());
    Var logits = ad::add(ad::matmul(x, p["gaf.Wa"]), ad::gather_rows(anchor_term, std::move(rows)));
    Var alpha = ad::softmax(logits);
    Var aw = ad::mul(alpha, ad::expand(column(token_weight), 1, m));
    Var weighted_x = ad::segment_outer(aw, x, segment, num_segments);  // [S, M, d]
    Var mass = ad::segment_sum(aw, segment, num_segments);              // [S, M]
    Var resid = vlad_residual(weighted_x, mass, codebook);
    Var z = ad::matmul(ad::l2_normalize(resid), p["gaf.Wz"]);
    Var alpha_mass = ad::segment_sum(alpha, segment, num_segments);
    Var log_w = ad::sub(ad::log(ad::add_scalar(mass, 1e-12)), ad::log(ad::add_scalar(alpha_mass, 1e-12)));
    return {z, log_w, alpha};
}

Var film(Var z, Var f_pc, const ad::Bound& p) {
    const auto& zs = z.value().shape();
    require(zs.size() == 3, "film: z must be [A, M, d]");
    const std::size_t a = zs[0], d = zs[2];
    Var raw = ad::linear(f_pc, p["gaf.film.W"], p["gaf.film.b"]);
    require(raw.value().dim(1) == 2 * d, "film: FiLM output must be 2d wide");
    Var gamma = ad::add_scalar(ad::slice(raw, 0, d), 1.0);
    Var beta = ad::slice(raw, d, 2 * d);
    require(gamma.value().dim(0) == a, "film: one conditioning row per anchor required");
    return film_apply(z, gamma, beta);
}

Var fused_attention(Var f_pc, const std::vector<LevelSlots>& levels, std::span<const std::uint8_t> visible,
                    const ad::Bound& p) {
    require(!levels.empty(), "fused_attention: at least one level required");
    Var q = ad::matmul(f_pc, p["gaf.Wq"]);
    const std::size_t a = q.value().dim(0), d = q.value().dim(1);
    require(visible.size() == a, "fused_attention: one visibility flag per anchor required");
    Var lambda = ad::softmax(p["gaf.lambda"]);
    require(lambda.value().numel() == levels.size(), "fused_attention: one lambda per level required");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    Var out;
    for (std::size_t l = 0; l < levels.size(); ++l) {
        const auto& s = levels[l].slots.value().shape();
        require(s.size() == 3 && s[0] == a && s[2] == d, "fused_attention: slots must be [A, M, d]");
        const std::size_t m = s[1];
        const std::string tag = std::to_string(l);
        Var k = ad::matmul(levels[l].slots, p["gaf.Wk" + tag]);
        Var v = ad::matmul(levels[l].slots, p["gaf.Wv" + tag]);
        Var dots = ad::reshape(ad::bmm(k, ad::reshape(q, {a, d, 1})), {a, m});
        Var scores = ad::add(ad::scale(dots, inv_sqrt_d), levels[l].log_bias);
        Var attn = ad::softmax(ad::reshape(scores, {a, m}));
        Var al = ad::reshape(ad::bmm(ad::reshape(attn, {a, 1, m}), v), {a, d});
        Var term = ad::mul(al, ad::slice(lambda, l, l + 1));
        out = l == 0 ? term : ad::add(out, term);
    }
    Tensor mask({a, d});
    for (std::size_t i = 0; i < a; ++i) {
        if (visible[i]) std::fill_n(&mask[i * d], d, 1.0);
    }
    return ad::mul(out, f_pc.tape->constant(std::move(mask)));
}

GaussianVars update_gaussian(Var mu, Var f_pc, Var f_img, const ad::Bound& p, const GafConfig& cfg) {
    Var h = ad::gelu(ad::linear(ad::concat({f_pc, f_img}), p["gaf.ffn.W0"], p["gaf.ffn.b0"]));
    Var raw = ad::linear(h, p["gaf.ffn.W1"], p["gaf.ffn.b1"]);
    const auto c = static_cast<std::size_t>(cfg.num_classes);
    require(raw.value().dim(1) == 10 + c, "update_gaussian: FFN output must be 10 + |C| wide");
    Var raw_mu = ad::slice(raw, 0, 3);
    Var offset = cfg.delta_max > 0.0 ? ad::scale(ad::tanh(raw_mu), cfg.delta_max) : raw_mu;
    GaussianVars out;
    out.mu = ad::add(mu, offset);
    out.log_scale = ad::log(ad::add_scalar(ad::softplus(ad::slice(raw, 3, 6)), cfg.s_min));
    out.rot = quat_or_identity(ad::slice(raw, 6, 10));
    out.sem = ad::slice(raw, 10, 10 + c);
    return out;
}

namespace {

std::vector<Vec3> rows3(const Tensor& t) {
    std::vector<Vec3> out(t.dim(0));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {t[i * 3], t[i * 3 + 1], t[i * 3 + 2]};
    return out;
}

GaussianVars refine_once(const GaussianVars& in, const GafInputs& inputs, const std::vector<Vec3>& centers,
                         const ad::Bound& p, const GafConfig& cfg, GafStats* stats) {
    ad::Tape& tape = p.tape();
    const std::size_t a = in.mu.value().dim(0);
    const auto d = static_cast<std::size_t>(cfg.d);
    const std::size_t nviews = inputs.cameras.size();
    const std::size_t nlev = cfg.levels();
    const auto n_off = static_cast<std::size_t>(cfg.n_off);

    const auto mu_vals = rows3(in.mu.value());
    auto scale_vals = rows3(in.log_scale.value());
    for (auto& s : scale_vals) s = {std::exp(s[0]), std::exp(s[1]), std::exp(s[2])};
    const Neighborhoods nb = find_neighborhoods(mu_vals, scale_vals, centers, cfg.k_geo);
    Var f_pc = anchor_geometry_feature(in.mu, inputs.voxel_features, centers, nb, cfg.gamma);

    std::vector<std::vector<std::uint8_t>> in_view(nviews, std::vector<std::uint8_t>(a, 0));
    std::vector<std::int64_t> compact_row(a, -1);
    std::vector<std::int64_t> vis_idx;
    for (std::size_t i = 0; i < a; ++i) {
        for (std::size_t v = 0; v < nviews; ++v) {
            in_view[v][i] = project(mu_vals[i], inputs.cameras[v]).in_frustum ? 1 : 0;
            if (in_view[v][i] && compact_row[i] < 0) {
                compact_row[i] = static_cast<std::int64_t>(vis_idx.size());
                vis_idx.push_back(static_cast<std::int64_t>(i));
            }
        }
    }
    // Image aggregation runs on the visible anchors only; the rest get zero rows.
    const std::size_t av = vis_idx.size();
    Tokens tok;
    for (std::size_t c = 0; c < av; ++c) {
        const auto i = static_cast<std::size_t>(vis_idx[c]);
        for (std::size_t v = 0; v < nviews; ++v) {
            if (!in_view[v][i]) continue;
            for (std::size_t r = 0; r < n_off; ++r) {
                tok.anchor.push_back(static_cast<std::uint32_t>(c));
                tok.view.push_back(static_cast<std::uint32_t>(v));
                tok.r.push_back(static_cast<std::uint32_t>(r));
            }
        }
    }
    if (stats) {
        stats->tokens = tok.size() * nlev;
        stats->visible_anchors = av;
    }

    Var f_img;
    if (tok.size() == 0) {
        f_img = constant_like_rows(tape, a, d, 0.0);
    } else {
        Var mu_vis = ad::gather_rows(in.mu, vis_idx);
        Var fpc_vis = ad::gather_rows(f_pc, vis_idx);
        std::vector<Var> pix;
        for (std::size_t v = 0; v < nviews; ++v) pix.push_back(project(mu_vis, inputs.cameras[v]));
        Var delta;
        if (cfg.guided_sampling) {
            delta = sample_offsets(fpc_vis, p);
        } else {
            const auto fixed = fixed_offsets(cfg.n_off);
            Tensor t({av, n_off * 2});
            for (std::size_t i = 0; i < av; ++i) {
                for (std::size_t r = 0; r < n_off; ++r) {
                    t[i * n_off * 2 + r * 2] = fixed[r][0];
                    t[i * n_off * 2 + r * 2 + 1] = fixed[r][1];
                }
            }
            delta = tape.constant(std::move(t));
        }
        const std::size_t max_slots = nviews * n_off;
        std::vector<LevelSlots> levels;
        for (std::size_t l = 0; l < nlev; ++l) {
            const auto& ms = inputs.pyramids[0][l].value().shape();
            const int mh = static_cast<int>(ms[0]), mw = static_cast<int>(ms[1]);
            const double stride = cfg.strides[l], radius = cfg.radii[l];
            Var loc = token_locations(pix, &delta, tok, stride, radius, mw, mh, true);
            Var ctr = token_locations(pix, nullptr, tok, stride, radius, mw, mh, false);
            Var diff = ad::sub(loc, ctr);
            const double sigma = cfg.kappa * radius;
            Var log_w = ad::scale(ad::sum_last(ad::mul(diff, diff)), -0.5 / (sigma * sigma));
            std::vector<Var> maps;
            for (std::size_t v = 0; v < nviews; ++v) maps.push_back(inputs.pyramids[v][l]);
            Var x = sample_maps(maps, loc, tok.view);
            if (cfg.vlad) {
                VladOutput vo = geo_vlad(x, fpc_vis, ad::exp(log_w), tok.anchor, av, p);
                levels.push_back({film(vo.z, fpc_vis, p), vo.log_weight});
            } else {
                std::vector<std::int64_t> slot_row(av * max_slots, -1);
                Tensor pad({av, max_slots}, -1e9);
                std::vector<std::size_t> fill(av, 0);
                for (std::size_t t = 0; t < tok.size(); ++t) {
                    const std::size_t i = tok.anchor[t];
                    slot_row[i * max_slots + fill[i]] = static_cast<std::int64_t>(t);
                    pad[i * max_slots + fill[i]] = 0.0;
                    ++fill[i];
                }
                Var slots = ad::reshape(ad::gather_rows(x, slot_row), {av, max_slots, d});
                Var bias = ad::add(ad::reshape(ad::gather_rows(column(log_w), slot_row), {av, max_slots}),
                                   tape.constant(std::move(pad)));
                levels.push_back({film(slots, fpc_vis, p), bias});
            }
        }
        const std::vector<std::uint8_t> all_visible(av, 1);
        f_img = ad::gather_rows(fused_attention(fpc_vis, levels, all_visible, p), compact_row);
    }
    return update_gaussian(in.mu, f_pc, f_img, p, cfg);
}

} // namespace

GaussianVars gaf_forward(const GaussianVars& in, const GafInputs& inputs, const ad::Bound& p, const GafConfig& cfg,
                         GafStats* stats) {
    cfg.validate();
    require(inputs.voxels != nullptr, "gaf_forward: voxel grid required");
    require(in.mu.value().rank() == 2 && in.mu.value().dim(1) == 3 && in.log_scale.value().shape() == in.mu.value().shape(),
            "gaf_forward: mu and log_scale must be [A, 3]");
    require(inputs.pyramids.size() == inputs.cameras.size(), "gaf_forward: one pyramid per camera required");
    const auto& vf = inputs.voxel_features.value();
    require(inputs.voxels->size() > 0, "gaf_forward: voxel grid is empty");
    require(vf.rank() == 2 && vf.dim(0) == inputs.voxels->size() && vf.dim(1) == static_cast<std::size_t>(cfg.d_pc),
            "gaf_forward: voxel features must be [Nv, d_pc]");
    for (std::size_t v = 0; v < inputs.pyramids.size(); ++v) {
        require(inputs.pyramids[v].size() == cfg.levels(), "gaf_forward: pyramid level count mismatch");
        for (std::size_t l = 0; l < cfg.levels(); ++l) {
            const auto& s = inputs.pyramids[v][l].value().shape();
            require(s.size() == 3 && s[2] == static_cast<std::size_t>(cfg.d), "gaf_forward: pyramid maps must be [H, W, d]");
            require(s == inputs.pyramids[0][l].value().shape(), "gaf_forward: views differ in map shape");
        }
    }
    const auto centers = inputs.voxels->centers();
    GaussianVars cur = in;
    for (int it = 0; it < cfg.iterations; ++it) {
        cur = refine_once(cur, inputs, centers, p, cfg, stats);
    }
    return cur;
}

namespace {

Tensor glorot(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0) {
    Tensor w({in, out});
    const double lim = gain * std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& v : w.vec()) v = rng.uniform(-lim, lim);
    return w;
}

} // namespace

ad::ParamStore init_params(const GafConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng = Rng(seed).split("gaf.init");
    const auto d = static_cast<std::size_t>(cfg.d), dp = static_cast<std::size_t>(cfg.d_pc);
    const auto m = static_cast<std::size_t>(cfg.codebook);
    ad::ParamStore ps;
    for (int l = 0; l < 2; ++l) {
        Tensor w = glorot(kTaps * dp, dp, rng);
        for (std::size_t j = 0; j < dp; ++j) w[(kCenterTap * dp + j) * dp + j] += 1.0;
        const std::string base = "enc.conv" + std::to_string(l);
        ps.add(base + ".W", std::move(w));
        ps.add(base + ".b", Tensor({dp}, 0.0));
    }
    const auto hid = static_cast<std::size_t>(cfg.offset_hidden);
    const auto noff2 = static_cast<std::size_t>(cfg.n_off) * 2;
    ps.add("gaf.offset.W0", glorot(dp, hid, rng));
    ps.add("gaf.offset.b0", Tensor({hid}, 0.0));
    ps.add("gaf.offset.W1", glorot(hid, noff2, rng, 0.1));
    ps.add("gaf.offset.b1", Tensor({noff2}, 0.0));

    Tensor codebook({m, d});
    for (auto& v : codebook.vec()) v = 0.1 * rng.normal();
    ps.add("gaf.codebook", std::move(codebook));
    ps.add("gaf.Wa", glorot(d, m, rng));
    ps.add("gaf.Ua", glorot(dp, m, rng));
    ps.add("gaf.ba", Tensor({m}, 0.0));
    ps.add("gaf.Wz", glorot(d, d, rng));
    ps.add("gaf.film.W", Tensor({dp, 2 * d}, 0.0));
    ps.add("gaf.film.b", Tensor({2 * d}, 0.0));
    ps.add("gaf.Wq", glorot(dp, d, rng));
    for (std::size_t l = 0; l < cfg.levels(); ++l) {
        ps.add("gaf.Wk" + std::to_string(l), glorot(d, d, rng));
        ps.add("gaf.Wv" + std::to_string(l), glorot(d, d, rng));
    }
    ps.add("gaf.lambda", Tensor({cfg.levels()}, 0.0));

    for (std::size_t l = 0; l < cfg.levels(); ++l) {
        const auto r = static_cast<std::size_t>(l == 0 ? cfg.strides[0] : cfg.strides[l] / cfg.strides[l - 1]);
        const std::size_t in = l == 0 ? r * r * 3 : r * r * d;
        ps.add("backbone.l" + std::to_string(l) + ".W", glorot(in, d, rng));
        ps.add("backbone.l" + std::to_string(l) + ".b", Tensor({d}, 0.0));
    }

    const auto fh = static_cast<std::size_t>(cfg.ffn_hidden);
    const std::size_t out = 10 + static_cast<std::size_t>(cfg.num_classes);
    ps.add("gaf.ffn.W0", glorot(dp + d, fh, rng));
    ps.add("gaf.ffn.b0", Tensor({fh}, 0.0));
    ps.add("gaf.ffn.W1", Tensor({fh, out}, 0.0));
    Tensor b1({out}, 0.0);
    b1[6] = 1.0;
    ps.add("gaf.ffn.b1", std::move(b1));
    return ps;
}

} // namespace occ::gaf
