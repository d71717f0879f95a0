// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#include "occ/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "occ/error.hpp"

namespace occ::obj {

ad::Var cross_entropy(ad::Var logits, std::span<const std::uint8_t> labels, std::optional<int> ignore_label) {
    const auto& x = logits.value();
    require(x.rank() == 2, "cross_entropy: logits must be [V, C]");
    const std::size_t v = x.dim(0), c = x.dim(1);
    require(labels.size() == v, "cross_entropy: one label per voxel required");

    ad::Tensor probs({v, c});
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t i = 0; i < v; ++i) {
        const double* row = &x[i * c];
        const double mx = *std::max_element(row, row + c);
        double z = 0.0;
        for (std::size_t k = 0; k < c; ++k) {
            probs[i * c + k] = std::exp(row[k] - mx);
            z += probs[i * c + k];
        }
        for (std::size_t k = 0; k < c; ++k) {
            probs[i * c + k] /= z;
        }
        if (ignore_label && labels[i] == *ignore_label) {
            continue;
        }
        require(labels[i] < c, "cross_entropy: label out of range");
        total += -(row[labels[i]] - mx - std::log(z));
        ++counted;
    }
    require(counted > 0, "cross_entropy: every voxel is ignored");
    const double inv = 1.0 / static_cast<double>(counted);
    std::vector<std::uint8_t> lab(labels.begin(), labels.end());
    return logits.tape->record(
        "cross_entropy", ad::Tensor::scalar(total * inv), {logits},
        [probs = std::move(probs), lab = std::move(lab), ignore_label, inv, v, c](
            const ad::Tensor& g, std::span<ad::Tensor* const> pg) {
            auto* gl = pg[0];
            if (!gl) return;
            for (std::size_t i = 0; i < v; ++i) {
                if (ignore_label && lab[i] == *ignore_label) continue;
                for (std::size_t k = 0; k < c; ++k) {
                    (*gl)[i * c + k] += g[0] * inv * (probs[i * c + k] - (k == lab[i] ? 1.0 : 0.0));
                }
            }
        });
}

double lovasz_class_loss(std::span<const double> errors, std::span<const std::uint8_t> positives,
                         std::vector<double>* grad) {
    const std::size_t n = errors.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return errors[a] > errors[b]; });
    double gts = 0.0;
    for (auto p : positives) gts += p ? 1.0 : 0.0;

    double loss = 0.0;
    double cum_pos = 0.0, cum_neg = 0.0;
    double prev_jac = 0.0;
    if (grad) grad->assign(n, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t i = order[r];
        if (positives[i]) cum_pos += 1.0; else cum_neg += 1.0;
        const double inter = gts - cum_pos;
        const double uni = gts + cum_neg;
        const double jac = uni > 0.0 ? 1.0 - inter / uni : 0.0;
        const double step = jac - prev_jac;
        prev_jac = jac;
        loss += errors[i] * step;
        if (grad) (*grad)[i] = step;
    }
    return loss;
}

ad::Var lovasz_softmax(ad::Var probs, std::span<const std::uint8_t> labels) {
    const auto& p = probs.value();
    require(p.rank() == 2, "lovasz_softmax: probs must be [V, C]");
    const std::size_t v = p.dim(0), c = p.dim(1);
    require(labels.size() == v, "lovasz_softmax: one label per voxel required");

    // d(loss)/d(probs), accumulated per present class.
    ad::Tensor dprobs({v, c});
    std::vector<double> errors(v), grad;
    std::vector<std::uint8_t> fg(v);
    double total = 0.0;
    std::size_t present = 0;
    for (std::size_t k = 0; k < c; ++k) {
        bool any = false;
        for (std::size_t i = 0; i < v; ++i) {
            fg[i] = labels[i] == k;
            any = any || fg[i];
        }
        if (!any) continue;
        ++present;
        for (std::size_t i = 0; i < v; ++i) {
            errors[i] = std::abs((fg[i] ? 1.0 : 0.0) - p[i * c + k]);
        }
        total += lovasz_class_loss(errors, fg, &grad);
        for (std::size_t i = 0; i < v; ++i) {
            // errors = 1 - p on positives, p on negatives (p within [0, 1]).
            dprobs[i * c + k] += grad[i] * (fg[i] ? -1.0 : 1.0);
        }
    }
    const double inv = present ? 1.0 / static_cast<double>(present) : 0.0;
    return probs.tape->record("lovasz_softmax", ad::Tensor::scalar(total * inv), {probs},
                              [dprobs = std::move(dprobs), inv](const ad::Tensor& g, std::span<ad::Tensor* const> pg) {
                                  if (auto* gp = pg[0]) {
                                      for (std::size_t i = 0; i < dprobs.numel(); ++i) {
                                          (*gp)[i] += g[0] * inv * dprobs[i];
                                      }
                                  }
                              });
}

double iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
    require(pred.size() == gt.size(), "iou: grids differ in size");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred[i] != 0, g = gt[i] != 0;
        tp += p && g;
        fp += p && !g;
        fn += !p && g;
    }
    const std::size_t denom = tp + fp + fn;
    return denom == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(denom);
}

std::vector<ClassIou> per_class_iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                                    int num_classes, bool present_only) {
    require(pred.size() == gt.size(), "miou: grids differ in size");
    const auto c = static_cast<std::size_t>(num_classes);
    std::vector<std::size_t> tp(c), fp(c), fn(c);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        require(pred[i] < c && gt[i] < c, "miou: label out of range");
        if (pred[i] == gt[i]) {
            ++tp[pred[i]];
        } else {
            ++fp[pred[i]];
            ++fn[gt[i]];
        }
    }
    std::vector<ClassIou> out;
    for (std::size_t k = 1; k < c; ++k) {
        const std::size_t denom = tp[k] + fp[k] + fn[k];
        if (denom == 0) {
            if (!present_only) out.push_back({static_cast<int>(k), 0.0});
            continue;
        }
        out.push_back({static_cast<int>(k), static_cast<double>(tp[k]) / static_cast<double>(denom)});
    }
    return out;
}

double miou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, int num_classes,
            bool present_only) {
    const auto per = per_class_iou(pred, gt, num_classes, present_only);
    if (per.empty()) {
        return 1.0;
    }
    double s = 0.0;
    for (const auto& ci : per) s += ci.iou;
    return s / static_cast<double>(per.size());
}

double lr_at(long step, const LrSchedule& cfg) {
    require(step >= 0, "lr_at: step must be >= 0");
    if (step < cfg.warmup_iters) {
        return cfg.peak * static_cast<double>(step) / static_cast<double>(cfg.warmup_iters);
    }
    if (step >= cfg.total_iters) {
        return cfg.lr_min;
    }
    const double span = static_cast<double>(cfg.total_iters - cfg.warmup_iters);
    const double progress = static_cast<double>(step - cfg.warmup_iters) / span;
    return cfg.lr_min + 0.5 * (cfg.peak - cfg.lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

void AdamW::step(ad::ParamStore& params, const std::map<std::string, ad::Tensor>& grads, double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (auto& [name, p] : params) {
        auto git = grads.find(name);
        if (git == grads.end()) continue;
        const auto& g = git->second;
        require(g.shape() == p.shape(), "adamw: gradient shape mismatch for " + name);
        auto& m = m_.try_emplace(name, ad::Tensor(p.shape(), 0.0)).first->second;
        auto& v = v_.try_emplace(name, ad::Tensor(p.shape(), 0.0)).first->second;
        for (std::size_t i = 0; i < p.numel(); ++i) {
            p[i] -= lr * cfg_.weight_decay * p[i];
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

} // namespace occ::obj
