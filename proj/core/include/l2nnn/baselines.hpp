// Copyright 2026 The l2nnn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "l2nnn/datasets.hpp"
#include "l2nnn/losses.hpp"
#include "l2nnn/model.hpp"
#include "l2nnn/train.hpp"

namespace l2nnn {

/// A trainable configuration: architecture plus objective.
struct Recipe {
    ArchSpec arch;
    LossConfig loss;
    bool operator==(const Recipe&) const = default;
};

/// Techniques an ablation can remove.
enum class Ablation { weight_reg, loss_c, norm_pooling, two_sided_relu };
std::string to_string(Ablation a);
/// Throws std::invalid_argument on an unknown name.
Ablation parse_ablation(std::string_view name);

/// The recipe with exactly one technique removed:
///  - weight_reg: weights unconstrained (no rescaling, no copy/pool scaling)
///  - loss_c: omega = 0, gamma kept
///  - norm_pooling: every norm pool becomes a max pool over the same window
///  - two_sided_relu: every two-sided ReLU becomes a plain ReLU
Recipe ablation_variant(const Recipe& base, Ablation what);

/// Ordinary counterpart of an L2NNN architecture: unconstrained weights,
/// ReLU in place of two-sided ReLU with the producing layer's width doubled,
/// single (shared) head.
ArchSpec baseline_arch(const ArchSpec& l2nnn);

struct BaselineConfig {
    ArchSpec arch;
    double weight_decay = 0.0;
    double dropout_rate = 0.0;
    bool early_stopping = false;
    int patience = 3;
    /// Training rows held out to monitor the loss for early stopping.
    std::size_t holdout = 1000;
    std::uint64_t split_seed = 0;

    void validate() const;
};

/// The arch with `dropout:r` inserted after every hidden activation.
ArchSpec with_dropout(const ArchSpec& arch, double rate);

struct BaselineResult {
    Model model;
    std::vector<EpochMetrics> history;
    /// False when labels are fully scrambled: the held-out loss carries no
    /// signal, so early stopping is reported as not applicable.
    bool early_stopping_applicable = true;
    int best_epoch = -1;
};

/// Plain cross-entropy training with the requested regularizers.
/// `scramble_fraction` tells whether early stopping is meaningful.
BaselineResult train_baseline(const BaselineConfig& cfg, const TrainOptions& opts, const Dataset& train,
                              const Dataset* test, double scramble_fraction = 0.0, std::uint64_t seed = 0);

}  // namespace l2nnn
