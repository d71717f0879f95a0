// Copyright 2026 The occsplat Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "occ/params.hpp"
#include "occ/tape.hpp"

namespace occ::obj {

/// Mean of -log softmax(logits)[label] over voxels whose label != ignore_label.
/// logits: [V, C]. Throws ContractError when every voxel is ignored.
ad::Var cross_entropy(ad::Var logits, std::span<const std::uint8_t> labels,
                      std::optional<int> ignore_label = std::nullopt);

/// Lovasz-Softmax, averaged over the classes present in `labels`. probs: [V, C]
/// rows on the simplex.
ad::Var lovasz_softmax(ad::Var probs, std::span<const std::uint8_t> labels);

/// Lovasz extension of the Jaccard loss for one class: errors sorted descending,
/// dotted with the discrete gradient of the Jaccard loss of the sorted indicator.
double lovasz_class_loss(std::span<const double> errors, std::span<const std::uint8_t> positives,
                         std::vector<double>* grad = nullptr);

/// Binary occupancy IoU (label != 0). Returns 1.0 when both grids are all empty.
double iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

struct ClassIou {
    int class_id;
    double iou;
};

/// Per-class IoU over semantic classes 1..num_classes-1. With `present_only`,
/// classes absent from both grids are skipped; otherwise they score 0.
std::vector<ClassIou> per_class_iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt,
                                    int num_classes, bool present_only = true);
double miou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt, int num_classes,
            bool present_only = true);

struct AdamWConfig {
    double lr = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct LrSchedule {
    double peak = 2e-4;
    double lr_min = 1e-6;
    long warmup_iters = 500;
    long total_iters = 10000;
};

/// Linear 0 -> peak over warmup, then cosine peak -> lr_min until total_iters.
double lr_at(long step, const LrSchedule& cfg);

/// Per-parameter moments plus a shared step count.
class AdamW {
  public:
    explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}
    /// One decoupled-weight-decay step at learning rate `lr`.
    void step(ad::ParamStore& params, const std::map<std::string, ad::Tensor>& grads, double lr);
    long steps() const { return step_; }
    const AdamWConfig& config() const { return cfg_; }

  private:
    AdamWConfig cfg_;
    long step_ = 0;
    std::map<std::string, ad::Tensor> m_, v_;
};

} // namespace occ::obj
