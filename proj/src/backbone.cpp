// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include <string>

#include "occ/error.hpp"
#include "occ/gaf.hpp"
#include "occ/ops.hpp"

namespace occ::gaf {

FeaturePyramid encode_image(const ad::Tensor& image, const ad::Bound& p, const GafConfig& cfg) {
    require(image.rank() == 3 && image.dim(2) == 3, "encode_image: image must be [H, W, 3]");
    const std::size_t h = image.dim(0), w = image.dim(1);
    const auto top = static_cast<std::size_t>(cfg.strides.back());
    require(h % top == 0 && w % top == 0, "encode_image: image size must be divisible by the largest stride");
    const auto d = static_cast<std::size_t>(cfg.d);

    const auto s0 = static_cast<std::size_t>(cfg.strides[0]);
    std::size_t lh = h / s0, lw = w / s0;
    ad::Tensor patches({lh * lw, s0 * s0 * 3});
    for (std::size_t i = 0; i < lh; ++i) {
        for (std::size_t j = 0; j < lw; ++j) {
            double* row = &patches[(i * lw + j) * s0 * s0 * 3];
            for (std::size_t dy = 0; dy < s0; ++dy) {
                for (std::size_t dx = 0; dx < s0; ++dx) {
                    for (std::size_t c = 0; c < 3; ++c) {
                        row[(dy * s0 + dx) * 3 + c] = 2.0 * image[((i * s0 + dy) * w + j * s0 + dx) * 3 + c] - 1.0;
                    }
                }
            }
        }
    }
    FeaturePyramid out;
    ad::Var cur = ad::gelu(ad::linear(p.tape().constant(std::move(patches)), p["backbone.l0.W"], p["backbone.l0.b"]));
    out.push_back(ad::reshape(cur, {lh, lw, d}));
    for (std::size_t l = 1; l < cfg.levels(); ++l) {
        const auto r = static_cast<std::size_t>(cfg.strides[l] / cfg.strides[l - 1]);
        const std::size_t nh = lh / r, nw = lw / r;
        std::vector<ad::Var> parts;
        for (std::size_t dy = 0; dy < r; ++dy) {
            for (std::size_t dx = 0; dx < r; ++dx) {
                std::vector<std::int64_t> idx(nh * nw);
                for (std::size_t i = 0; i < nh; ++i) {
                    for (std::size_t j = 0; j < nw; ++j) {
                        idx[i * nw + j] = static_cast<std::int64_t>((i * r + dy) * lw + j * r + dx);
                    }
                }
                parts.push_back(ad::gather_rows(cur, std::move(idx)));
            }
        }
        const std::string name = "backbone.l" + std::to_string(l);
        cur = ad::gelu(ad::linear(ad::concat(parts), p[name + ".W"], p[name + ".b"]));
        lh = nh;
        lw = nw;
        out.push_back(ad::reshape(cur, {lh, lw, d}));
    }
    return out;
}

} // namespace occ::gaf
