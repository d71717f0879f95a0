// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "occ/error.hpp"
#include "occ/gradcheck.hpp"
#include "occ/objectives.hpp"
#include "occ/ops.hpp"
#include "occ/rng.hpp"

namespace occ::obj {
namespace {

double ce_value(const ad::Tensor& logits, const std::vector<std::uint8_t>& labels,
                std::optional<int> ignore = std::nullopt) {
    ad::Tape t;
    return cross_entropy(t.constant(logits), labels, ignore).value()[0];
}

double lovasz_value(const ad::Tensor& probs, const std::vector<std::uint8_t>& labels) {
    ad::Tape t;
    return lovasz_softmax(t.constant(probs), labels).value()[0];
}

// Integral form of the Lovasz extension, f(e) = sum_i (e_(i) - e_(i+1)) * Jaccard loss of
// the top-i superlevel set, with each set's Jaccard loss counted from scratch.
double lovasz_extension_oracle(const std::vector<double>& e, const std::vector<bool>& pos) {
    std::vector<double> levels(e.begin(), e.end());
    levels.push_back(0.0);
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    double total = 0.0;
    for (std::size_t l = 1; l < levels.size(); ++l) {
        const double theta = levels[l];
        std::size_t mis = 0, uni = 0;
        for (std::size_t i = 0; i < e.size(); ++i) {
            const bool in_set = e[i] >= theta;
            mis += in_set;
            uni += in_set || pos[i];
        }
        const double jac_loss = uni ? static_cast<double>(mis) / static_cast<double>(uni) : 0.0;
        total += (levels[l] - levels[l - 1]) * jac_loss;
    }
    return total;
}

ad::Tensor random_probs(Rng& rng, std::size_t v, std::size_t c) {
    ad::Tensor p({v, c});
    for (std::size_t i = 0; i < v; ++i) {
        double z = 0.0;
        for (std::size_t k = 0; k < c; ++k) z += (p[i * c + k] = rng.uniform(0.05, 1.0));
        for (std::size_t k = 0; k < c; ++k) p[i * c + k] /= z;
    }
    return p;
}

TEST(CrossEntropy, SaturatedLogitIsNearZero) {
    ad::Tensor logits({4, 6}, 0.0);
    std::vector<std::uint8_t> labels{0, 3, 5, 1};
    for (std::size_t i = 0; i < 4; ++i) logits[i * 6 + labels[i]] = 30.0;
    EXPECT_LT(ce_value(logits, labels), 1e-9);
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
    EXPECT_NEAR(ce_value(ad::Tensor({9, 6}, 0.0), std::vector<std::uint8_t>(9, 2)), std::log(6.0), 1e-12);
}

TEST(CrossEntropy, MatchesPerVoxelReference) {
    Rng rng(1);
    ad::Tensor logits({9, 4});
    for (auto& v : logits.vec()) v = rng.uniform(-3, 3);
    std::vector<std::uint8_t> labels(9);
    for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(4));
    double want = 0.0;
    for (std::size_t i = 0; i < 9; ++i) {
        double z = 0.0;
        for (std::size_t k = 0; k < 4; ++k) z += std::exp(logits[i * 4 + k]);
        want += -std::log(std::exp(logits[i * 4 + labels[i]]) / z);
    }
    EXPECT_NEAR(ce_value(logits, labels), want / 9.0, 1e-12);

    const auto g = ad::gradcheck([&](ad::Tape&, ad::Var x) { return cross_entropy(x, labels); }, logits);
    EXPECT_LT(g.max_rel_error, 1e-6);
}

TEST(CrossEntropy, IgnoreLabel) {
    ad::Tensor logits({2, 3}, {0.0, 0.0, 0.0, 5.0, 0.0, 0.0});
    std::vector<std::uint8_t> labels{255, 0};
    EXPECT_NEAR(ce_value(logits, labels, 255), -std::log(std::exp(5.0) / (std::exp(5.0) + 2.0)), 1e-12);
    std::vector<std::uint8_t> all_ignored{255, 255};
    EXPECT_THROW(ce_value(logits, all_ignored, 255), ContractError);
    std::vector<std::uint8_t> bad{7, 0};
    EXPECT_THROW(ce_value(logits, bad), ContractError);
    const auto g = ad::gradcheck([&](ad::Tape&, ad::Var x) { return cross_entropy(x, labels, 255); }, logits);
    EXPECT_LT(g.max_rel_error, 1e-6);
}

TEST(Lovasz, PerfectPredictionIsZero) {
    std::vector<std::uint8_t> labels{0, 1, 2, 2, 1};
    ad::Tensor p({5, 3}, 0.0);
    for (std::size_t i = 0; i < 5; ++i) p[i * 3 + labels[i]] = 1.0;
    EXPECT_EQ(lovasz_value(p, labels), 0.0);
}

TEST(Lovasz, SingleVoxel) {
    ad::Tensor p({1, 3}, {0.3, 0.5, 0.2});
    EXPECT_NEAR(lovasz_value(p, {0}), 0.7, 1e-15);
}

TEST(Lovasz, MatchesExtensionOracleAndStaysInUnitInterval) {
    Rng rng(2);
    for (int trial = 0; trial < 200; ++trial) {
        const auto p = random_probs(rng, 4, 3);
        std::vector<std::uint8_t> labels(4);
        for (auto& l : labels) l = static_cast<std::uint8_t>(rng.below(3));
        double want = 0.0;
        int present = 0;
        for (std::uint8_t c = 0; c < 3; ++c) {
            std::vector<bool> pos(4);
            std::vector<double> e(4);
            bool any = false;
            for (std::size_t i = 0; i < 4; ++i) {
                pos[i] = labels[i] == c;
                any = any || pos[i];
                e[i] = pos[i] ? 1.0 - p[i * 3 + c] : p[i * 3 + c];
            }
            if (!any) continue;
            ++present;
            want += lovasz_extension_oracle(e, pos);
        }
        const double got = lovasz_value(p, labels);
        EXPECT_NEAR(got, want / present, 1e-12);
        EXPECT_GE(got, 0.0);
        EXPECT_LE(got, 1.0);
    }
}

TEST(Lovasz, GradcheckAwayFromTies) {
    // 2x2x1 grid.
    ad::Tensor p({4, 3}, {0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.15, 0.25, 0.6, 0.45, 0.35, 0.2});
    std::vector<std::uint8_t> labels{0, 1, 2, 1};
    const auto g = ad::gradcheck([&](ad::Tape&, ad::Var x) { return lovasz_softmax(x, labels); }, p);
    EXPECT_LT(g.max_rel_error, 1e-4);
}

TEST(Iou, Closed) {
    std::vector<std::uint8_t> a{0, 1, 2, 0};
    EXPECT_EQ(iou(a, a), 1.0);
    std::vector<std::uint8_t> all{1, 1, 1, 1}, half{1, 0, 2, 0};
    EXPECT_EQ(iou(all, half), 0.5);
    std::vector<std::uint8_t> empty(4, 0);
    EXPECT_EQ(iou(empty, empty), 1.0);
}

struct Counts {
    std::size_t tp = 0, fp = 0, fn = 0;
};

TEST(Iou, MatchesCountingOracle) {
    Rng rng(3);
    for (int t = 0; t < 50; ++t) {
        std::vector<std::uint8_t> a(50), b(50);
        for (auto& v : a) v = static_cast<std::uint8_t>(rng.below(4));
        for (auto& v : b) v = static_cast<std::uint8_t>(rng.below(4));
        Counts c;
        for (std::size_t i = 0; i < 50; ++i) {
            if (a[i] && b[i]) ++c.tp;
            else if (a[i]) ++c.fp;
            else if (b[i]) ++c.fn;
        }
        EXPECT_EQ(iou(a, b), static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp + c.fn));
    }
}

TEST(Miou, IdenticalAndSwapped) {
    std::vector<std::uint8_t> a{1, 2, 3, 0, 1, 2};
    EXPECT_EQ(miou(a, a, 6), 1.0);
    std::vector<std::uint8_t> gt{1, 1, 2, 2, 3}, pred{2, 2, 1, 1, 3};
    const auto per = per_class_iou(pred, gt, 6);
    ASSERT_EQ(per.size(), 3u);
    EXPECT_EQ(per[0].iou, 0.0);
    EXPECT_EQ(per[1].iou, 0.0);
    EXPECT_EQ(per[2].iou, 1.0);
    EXPECT_EQ(per_class_iou(pred, gt, 6, false).size(), 5u);
}

TEST(Miou, MatchesCountingOracleAndIsRelabelSymmetric) {
    Rng rng(4);
    for (int t = 0; t < 50; ++t) {
        std::vector<std::uint8_t> a(50), b(50);
        for (auto& v : a) v = static_cast<std::uint8_t>(rng.below(5));
        for (auto& v : b) v = static_cast<std::uint8_t>(rng.below(5));
        double sum = 0.0;
        int n = 0;
        for (std::uint8_t c = 1; c < 6; ++c) {
            std::size_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < 50; ++i) {
                tp += a[i] == c && b[i] == c;
                fp += a[i] == c && b[i] != c;
                fn += a[i] != c && b[i] == c;
            }
            if (tp + fp + fn == 0) continue;
            sum += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
            ++n;
        }
        const double got = miou(a, b, 6);
        EXPECT_EQ(got, sum / n);
        // Relabel 1 <-> 3 on both sides.
        auto swap13 = [](std::vector<std::uint8_t> v) {
            for (auto& x : v) x = x == 1 ? 3 : (x == 3 ? 1 : x);
            return v;
        };
        EXPECT_NEAR(miou(swap13(a), swap13(b), 6), got, 1e-15);
        EXPECT_GE(got, 0.0);
        EXPECT_LE(got, 1.0);
    }
}

TEST(AdamW, ZeroGradientAndDecayLeavesParamsUnchanged) {
    ad::ParamStore ps;
    ps.add("w", ad::Tensor({3}, {1.0, -2.0, 0.5}));
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    std::map<std::string, ad::Tensor> g{{"w", ad::Tensor({3}, 0.0)}};
    for (int i = 0; i < 3; ++i) opt.step(ps, g, 1e-3);
    EXPECT_EQ(ps.at("w").vec(), (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(AdamW, FirstStepMagnitudeIsLr) {
    ad::ParamStore ps;
    ps.add("w", ad::Tensor({3}, 0.0));
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    AdamW opt(cfg);
    const std::vector<double> g{0.3, -4.0, 1e-3};
    opt.step(ps, {{"w", ad::Tensor({3}, g)}}, 0.01);
    for (std::size_t i = 0; i < 3; ++i) {
        // m_hat = g, v_hat = g^2 after bias correction.
        EXPECT_NEAR(ps.at("w")[i], -0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
    }
}

TEST(AdamW, DecoupledDecayAndDeterminism) {
    auto run = [] {
        ad::ParamStore ps;
        ps.add("w", ad::Tensor({2}, {1.0, 2.0}));
        AdamW opt;
        Rng rng(5);
        for (int i = 0; i < 10; ++i) {
            opt.step(ps, {{"w", ad::Tensor({2}, {rng.normal(), rng.normal()})}}, 1e-2);
        }
        return ps.at("w").vec();
    };
    EXPECT_EQ(run(), run());
    ad::ParamStore ps;
    ps.add("w", ad::Tensor({1}, {2.0}));
    AdamW opt;
    opt.step(ps, {{"w", ad::Tensor({1}, 0.0)}}, 0.1);
    EXPECT_NEAR(ps.at("w")[0], 2.0 * (1.0 - 0.1 * 0.01), 1e-15);
    EXPECT_THROW(opt.step(ps, {{"w", ad::Tensor({2}, 0.0)}}, 0.1), ContractError);
}

TEST(LrSchedule, WarmupAndCosine) {
    LrSchedule s;
    EXPECT_EQ(lr_at(0, s), 0.0);
    EXPECT_NEAR(lr_at(500, s), 2e-4, 1e-18);
    EXPECT_NEAR(lr_at(10000, s), 1e-6, 1e-18);
    EXPECT_NEAR(lr_at(499, s), lr_at(500, s), 1e-6);
    EXPECT_NEAR(lr_at(5250, s), 0.5 * (2e-4 + 1e-6), 1e-15);
    EXPECT_THROW(lr_at(-1, s), ContractError);
    for (long i = 500; i < 10000; i += 250) EXPECT_GE(lr_at(i, s), lr_at(i + 250, s));
}

} // namespace
} // namespace occ::obj
