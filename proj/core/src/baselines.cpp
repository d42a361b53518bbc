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

#include "l2nnn/baselines.hpp"

#include <limits>
#include <stdexcept>

namespace l2nnn {

std::string to_string(Ablation a) {
    switch (a) {
        case Ablation::weight_reg: return "weight_reg";
        case Ablation::loss_c: return "loss_c";
        case Ablation::norm_pooling: return "norm_pooling";
        case Ablation::two_sided_relu: return "two_sided_relu";
    }
    return "?";
}

Ablation parse_ablation(std::string_view name) {
    for (auto a : {Ablation::weight_reg, Ablation::loss_c, Ablation::norm_pooling, Ablation::two_sided_relu})
        if (name == to_string(a)) return a;
    throw std::invalid_argument("unknown ablation '" + std::string(name) + "'");
}

namespace {

void substitute(std::vector<LayerSpec>& layers, LayerKind from, const LayerSpec& to_template) {
    for (auto& l : layers) {
        if (l.kind == LayerKind::residual) {
            substitute(l.branch, from, to_template);
        } else if (l.kind == from) {
            LayerSpec s = to_template;
            s.window = l.window;
            l = s;
        }
    }
}

LayerSpec relu_spec() {
    LayerSpec s;
    s.kind = LayerKind::activation;
    s.fn = Nonlinearity::relu;
    return s;
}

// Replaces two-sided ReLUs by ReLUs, doubling the width of whatever layer
// feeds each one so the following layer sees the same channel count.
void widen(std::vector<LayerSpec>& layers) {
    LayerSpec* producer = nullptr;
    for (auto& l : layers) {
        switch (l.kind) {
            case LayerKind::conv:
            case LayerKind::linear: producer = &l; break;
            case LayerKind::residual: widen(l.branch); break;
            case LayerKind::two_sided_relu:
                if (producer) {
                    producer->units *= 2;
                    producer = nullptr;
                }
                l = relu_spec();
                break;
            default: break;
        }
    }
}

}  // namespace

Recipe ablation_variant(const Recipe& base, Ablation what) {
    Recipe r = base;
    switch (what) {
        case Ablation::weight_reg: r.arch.mode = WeightMode::unconstrained; break;
        case Ablation::loss_c: r.loss.omega = 0.0; break;
        case Ablation::norm_pooling: {
            LayerSpec mp;
            mp.kind = LayerKind::max_pool;
            substitute(r.arch.layers, LayerKind::norm_pool, mp);
            break;
        }
        case Ablation::two_sided_relu: substitute(r.arch.layers, LayerKind::two_sided_relu, relu_spec()); break;
    }
    return r;
}

ArchSpec baseline_arch(const ArchSpec& l2nnn) {
    ArchSpec a = l2nnn;
    a.mode = WeightMode::unconstrained;
    widen(a.layers);
    for (auto& l : a.layers)
        if (l.kind == LayerKind::heads) l.head = HeadKind::single;
    return a;
}

ArchSpec with_dropout(const ArchSpec& arch, double rate) {
    if (rate <= 0.0) return arch;
    ArchSpec out = arch;
    out.layers.clear();
    LayerSpec drop;
    drop.kind = LayerKind::dropout;
    drop.rate = rate;
    for (const auto& l : arch.layers) {
        out.layers.push_back(l);
        if (l.kind == LayerKind::activation || l.kind == LayerKind::two_sided_relu || l.kind == LayerKind::lift)
            out.layers.push_back(drop);
    }
    return out;
}

void BaselineConfig::validate() const {
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw std::invalid_argument("baseline: dropout_rate must lie in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("baseline: weight_decay must be >= 0");
    if (early_stopping && patience < 1) throw std::invalid_argument("baseline: patience must be >= 1");
}

BaselineResult train_baseline(const BaselineConfig& cfg, const TrainOptions& opts, const Dataset& train,
                              const Dataset* test, double scramble_fraction, std::uint64_t seed) {
    cfg.validate();
    BaselineResult result{Model(with_dropout(cfg.arch, cfg.dropout_rate), seed), {}, true, -1};
    result.early_stopping_applicable = scramble_fraction < 1.0;
    const bool stop_early = cfg.early_stopping && result.early_stopping_applicable && cfg.holdout > 0 &&
                            cfg.holdout < train.size();

    Dataset fit_set = train, held;
    if (stop_early) std::tie(fit_set, held) = split_holdout(train, cfg.holdout, cfg.split_seed);

    TrainOptions o = opts;
    o.plain_cross_entropy = true;
    o.weight_decay = cfg.weight_decay;
    LossConfig loss;
    LossParams params = LossParams::init(result.model.num_classes(), loss);
    Trainer trainer(result.model, params, loss, o);

    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    std::vector<std::vector<double>> snapshot;
    trainer.fit(fit_set, test, [&](const EpochMetrics& m) {
        result.history.push_back(m);
        if (!stop_early) return true;
        const double held_loss = evaluate(result.model, held).loss;
        if (held_loss < best) {
            best = held_loss;
            since_best = 0;
            result.best_epoch = m.epoch;
            snapshot.clear();
            for (const auto& p : result.model.parameters())
                snapshot.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
            return true;
        }
        return ++since_best < cfg.patience;
    });
    if (stop_early && !snapshot.empty()) {
        auto params_now = result.model.parameters();
        for (std::size_t i = 0; i < params_now.size(); ++i) {
            Tensor t = params_now[i].tensor;
            std::copy(snapshot[i].begin(), snapshot[i].end(), t.data().begin());
        }
        result.model.invalidate();
    }
    return result;
}

}  // namespace l2nnn
