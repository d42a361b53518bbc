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

#include <span>
#include <string>
#include <vector>

#include "l2nnn/model.hpp"
#include "l2nnn/tensor.hpp"

namespace l2nnn {

/// Hyperparameters of the three-term objective
///   L = L_a + gamma * L_b + omega * L_c  (+ penalty_weight * penalty).
struct LossConfig {
    double gamma = 1.0;
    double omega = 0.5;
    double z = 4.0;
    double v_init = 8.0;
    bool train_v = true;
    double penalty_weight = 1.0;
    // Adversarial variant: L_a on PGD-distorted inputs, L_c on the originals.
    bool adversarial = false;
    double adv_epsilon = 1.0;
    int adv_steps = 10;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// Trainable scalars of the loss: u (one per class) and v.
struct LossParams {
    Tensor u;
    Tensor v;

    static LossParams init(std::size_t num_classes, const LossConfig& cfg);
    /// Named as "loss/u" and "loss/v"; v only when trainable.
    std::vector<NamedParam> trainable(const LossConfig& cfg) const;
};

/// Mean softmax cross-entropy over (u_1 y_1, ..., u_K y_K).
Tensor loss_a(const Tensor& logits, std::span<const int> labels, const Tensor& u);
/// Mean softmax cross-entropy over v * y.
Tensor loss_b(const Tensor& logits, std::span<const int> labels, const Tensor& v);
/// Mean over the batch of log(1 - softmax(z y)_label) / z, with the log
/// argument floored at 1e-300.
Tensor loss_c(const Tensor& logits, std::span<const int> labels, double z);

struct LossTerms {
    Tensor total;
    double a = 0.0, b = 0.0, c = 0.0, penalty = 0.0;
};

/// Evaluates the full objective. `x_adv`, when defined, replaces x for L_a
/// only. The penalty is included iff ctx.mode == penalty.
LossTerms total_loss(const Model& model, const Tensor& x, std::span<const int> labels, const Tensor& x_adv,
                     const LossParams& params, const LossConfig& cfg, const ForwardContext& ctx);

}  // namespace l2nnn
