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
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "l2nnn/datasets.hpp"
#include "l2nnn/losses.hpp"
#include "l2nnn/model.hpp"

namespace l2nnn {

struct TrainOptions {
    int epochs = 10;
    std::size_t batch_size = 64;
    double lr = 0.01;
    double momentum = 0.9;
    /// Constrained models train in penalty mode for the first
    /// round(switch_fraction * epochs) epochs, then in rescale mode.
    double switch_fraction = 0.5;
    /// L2 decay on weight matrices (baselines).
    double weight_decay = 0.0;
    /// Replace the three-term objective by plain cross-entropy (baselines).
    bool plain_cross_entropy = false;
    /// Treat the sqrt(b) divisor as a constant in rescale-mode gradients.
    bool stop_bound_grad = false;
    /// Rescale the whole gradient to this L2 norm when it is larger (0 = off).
    double clip_norm = 0.0;
    /// Anneal lr along a half cosine over the epochs instead of keeping it flat.
    bool cosine_lr = false;
    /// Rows used for the per-epoch train metrics (0 = all).
    std::size_t train_eval_limit = 2000;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Mode in force during `epoch` (0-based) for a model whose deployed mode is
/// `deployed`.
WeightMode mode_for_epoch(WeightMode deployed, int epoch, const TrainOptions& opts);

struct Evaluation {
    double accuracy = 0.0;
    double avg_gap = 0.0;
    double loss = 0.0;  // mean cross-entropy on raw logits
};

/// Accuracy, mean confidence gap and cross-entropy over the first `limit`
/// rows (0 = all), in the model's deployed mode.
Evaluation evaluate(const Model& model, const Dataset& ds, std::size_t limit = 0);

struct EpochMetrics {
    int epoch = 0;
    WeightMode mode = WeightMode::rescale;
    double loss = 0.0, loss_a = 0.0, loss_b = 0.0, loss_c = 0.0, penalty = 0.0;
    double train_acc = 0.0, test_acc = 0.0;
    double train_gap = 0.0, test_gap = 0.0;
};

std::string metrics_header();
std::string format_metrics(const EpochMetrics& m);

/// Optimizer state that survives a checkpoint.
struct TrainState {
    int epoch = 0;
    /// Momentum buffers keyed by parameter name.
    std::map<std::string, std::vector<double>> momentum;
};

/// SGD with momentum over the model parameters and the loss scalars.
class Trainer {
public:
    Trainer(Model& model, LossParams& params, LossConfig loss, TrainOptions opts, TrainState state = {});

    /// One pass over `train`; `test` may be null.
    EpochMetrics run_epoch(const Dataset& train, const Dataset* test);
    /// Runs the remaining epochs up to opts.epochs; `on_epoch` sees each
    /// epoch's metrics and may return false to stop.
    std::vector<EpochMetrics> fit(const Dataset& train, const Dataset* test,
                                  const std::function<bool(const EpochMetrics&)>& on_epoch = {});

    const TrainState& state() const { return state_; }

private:
    Model& model_;
    LossParams& params_;
    LossConfig loss_;
    TrainOptions opts_;
    TrainState state_;
};

}  // namespace l2nnn
