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

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "l2nnn/model.hpp"

namespace l2nnn {

/// White-box L2-bounded untargeted attack settings.
struct AttackConfig {
    double epsilon = 1.0;
    int steps = 100;
    /// 0 selects the default 2 * epsilon / sqrt(steps).
    double step_size = 0.0;
    int restarts = 3;
    double box_lo = 0.0;
    double box_hi = 1.0;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument on epsilon <= 0, steps < 1, step_size < 0,
    /// restarts < 1 or an empty box.
    void validate() const;
    double effective_step(double eps) const;
};

struct AttackResult {
    Tensor adversarial;  // [1 x ...]
    double distortion = 0.0;
    bool success = false;
    int iterations_used = 0;
};

inline constexpr double kNoAttackFound = std::numeric_limits<double>::infinity();

/// Projected gradient ascent on the margin max_{k != label} y_k - y_label.
/// Every step is L2-normalized, then projected onto the epsilon ball and the
/// box. Restart 0 starts at x; later restarts start at a random point of the
/// ball. Success means argmax(model(x_adv)) != label. Among successful
/// restarts the lowest-distortion one is returned.
AttackResult pgd_l2(const Model& model, const Tensor& x, int label, const AttackConfig& cfg);

/// Batched form: row i of x attacked with budget eps[i] (cfg.epsilon is
/// ignored). When `first_success` is set, remaining restarts are skipped
/// for inputs already broken.
std::vector<AttackResult> pgd_l2_batch(const Model& model, const Tensor& x, std::span<const int> labels,
                                       std::span<const double> eps, const AttackConfig& cfg,
                                       bool first_success = false);

/// Smallest epsilon in (0, eps_max] at which PGD succeeds, found by bisection
/// (`halvings` probes after the initial check at eps_max). kNoAttackFound when
/// eps_max itself fails.
double min_distortion_search(const Model& model, const Tensor& x, int label, const AttackConfig& cfg, double eps_max,
                             int halvings = 12);
std::vector<double> min_distortion_batch(const Model& model, const Tensor& x, std::span<const int> labels,
                                         const AttackConfig& cfg, double eps_max, int halvings = 12);

struct SweepRow {
    int max_iter = 0;
    std::size_t robust = 0;
    std::size_t total = 0;
    double accuracy() const { return total ? static_cast<double>(robust) / static_cast<double>(total) : 0.0; }
};

struct SweepResult {
    std::vector<SweepRow> rows;
    /// Successful attacks whose distortion fell below the input's certified radius.
    std::size_t violations = 0;
};

/// Robust accuracy per iteration budget. An input counts as robust at rung i
/// only if it is classified correctly and no attack with budget <= rung i
/// changed its label, so accuracy never increases down the ladder. Rung 0 is
/// natural accuracy.
SweepResult iteration_sweep(const Model& model, const Tensor& x, std::span<const int> labels, double eps,
                            std::span<const int> ladder, const AttackConfig& cfg);

}  // namespace l2nnn
