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

#include "l2nnn/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "l2nnn/attack.hpp"
#include "l2nnn/certify.hpp"
#include "l2nnn/ops.hpp"

namespace l2nnn {

void TrainOptions::validate() const {
    if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train: momentum must lie in [0, 1)");
    if (switch_fraction < 0.0 || switch_fraction > 1.0)
        throw std::invalid_argument("train: switch_fraction must lie in [0, 1]");
    if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
    if (clip_norm < 0.0) throw std::invalid_argument("train: clip_norm must be >= 0");
}

WeightMode mode_for_epoch(WeightMode deployed, int epoch, const TrainOptions& opts) {
    if (deployed != WeightMode::rescale) return deployed;
    const int switch_at = static_cast<int>(std::lround(opts.switch_fraction * opts.epochs));
    return epoch < switch_at ? WeightMode::penalty : WeightMode::rescale;
}

Evaluation evaluate(const Model& model, const Dataset& ds, std::size_t limit) {
    const std::size_t n = limit ? std::min(limit, ds.size()) : ds.size();
    Evaluation ev;
    if (n == 0) return ev;
    const std::size_t k = model.num_classes();
    const std::size_t chunk = 500;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < n; b += chunk) {
        const std::size_t e = std::min(n, b + chunk);
        std::vector<std::size_t> idx(e - b);
        std::iota(idx.begin(), idx.end(), b);
        const Tensor y = model.logits(ds.gather(idx));
        auto yv = y.data();
        for (std::size_t i = b; i < e; ++i) {
            auto row = yv.subspan((i - b) * k, k);
            const auto pred = argmax(row);
            correct += static_cast<int>(pred) == ds.labels[i];
            ev.avg_gap += confidence_gap(row);
            const double m = row[pred];
            double acc = 0.0;
            for (double v : row) acc += std::exp(v - m);
            ev.loss += m + std::log(acc) - row[ds.labels[i]];
        }
    }
    ev.accuracy = static_cast<double>(correct) / n;
    ev.avg_gap /= n;
    ev.loss /= n;
    return ev;
}

std::string metrics_header() {
    return "epoch\tmode\tloss\tloss_a\tloss_b\tloss_c\tpenalty\ttrain_acc\ttest_acc\ttrain_gap\ttest_gap";
}

std::string format_metrics(const EpochMetrics& m) {
    std::ostringstream os;
    os.precision(6);
    os << m.epoch << '\t' << to_string(m.mode) << '\t' << m.loss << '\t' << m.loss_a << '\t' << m.loss_b << '\t'
       << m.loss_c << '\t' << m.penalty << '\t' << m.train_acc << '\t' << m.test_acc << '\t' << m.train_gap << '\t'
       << m.test_gap;
    return os.str();
}

Trainer::Trainer(Model& model, LossParams& params, LossConfig loss, TrainOptions opts, TrainState state)
    : model_(model), params_(params), loss_(std::move(loss)), opts_(std::move(opts)), state_(std::move(state)) {
    loss_.validate();
    opts_.validate();
}

EpochMetrics Trainer::run_epoch(const Dataset& train, const Dataset* test) {
    const int epoch = state_.epoch;
    const WeightMode mode = mode_for_epoch(model_.mode(), epoch, opts_);
    std::mt19937_64 rng(opts_.seed * 7919ULL + static_cast<std::uint64_t>(epoch));
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<NamedParam> params = model_.parameters();
    if (!opts_.plain_cross_entropy)
        for (auto& p : params_.trainable(loss_)) params.push_back(p);
    for (const auto& p : params) {
        auto& buf = state_.momentum[p.name];
        if (buf.size() != p.tensor.numel()) buf.assign(p.tensor.numel(), 0.0);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.mode = mode;
    const ForwardContext ctx{mode, Phase::train, &rng, opts_.stop_bound_grad};
    const double lr = opts_.cosine_lr && opts_.epochs > 0
                          ? 0.5 * opts_.lr * (1.0 + std::cos(std::numbers::pi * epoch / opts_.epochs))
                          : opts_.lr;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += opts_.batch_size) {
        const std::size_t e = std::min(order.size(), b + opts_.batch_size);
        std::span<const std::size_t> idx(order.data() + b, e - b);
        const Tensor x = train.gather(idx);
        std::vector<int> labels(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) labels[i] = train.labels[idx[i]];

        Tensor x_adv;
        if (loss_.adversarial && !opts_.plain_cross_entropy) {
            AttackConfig ac;
            ac.steps = loss_.adv_steps;
            ac.restarts = 1;
            ac.seed = opts_.seed + batches;
            std::vector<AttackResult> res =
                pgd_l2_batch(model_, x, labels, std::vector<double>(idx.size(), loss_.adv_epsilon), ac);
            std::vector<double> xs;
            xs.reserve(x.numel());
            for (const auto& r : res) xs.insert(xs.end(), r.adversarial.data().begin(), r.adversarial.data().end());
            x_adv = Tensor(x.shape(), std::move(xs));
        }

        for (const auto& p : params) p.tensor.zero_grad();
        Tape tape;
        LossTerms terms;
        {
            TapeGuard guard(tape);
            if (opts_.plain_cross_entropy) {
                const Tensor y = model_.forward(x, ctx);
                const Tensor ones = Tensor::full({model_.num_classes()}, 1.0);
                terms.total = loss_a(y, labels, ones);
                terms.a = terms.total.item();
            } else {
                terms = total_loss(model_, x, labels, x_adv, params_, loss_, ctx);
            }
        }
        tape.backward(terms.total);

        double clip = 1.0;
        if (opts_.clip_norm > 0.0) {
            double ss = 0.0;
            for (const auto& p : params)
                for (double g : p.tensor.grad()) ss += g * g;
            if (std::sqrt(ss) > opts_.clip_norm) clip = opts_.clip_norm / std::sqrt(ss);
        }
        for (const auto& p : params) {
            auto g = p.tensor.grad();
            if (g.empty()) continue;
            Tensor t = p.tensor;
            auto w = t.data();
            auto& buf = state_.momentum[p.name];
            const bool decay = opts_.weight_decay > 0.0 && p.name.ends_with(".weight");
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = clip * g[i] + (decay ? opts_.weight_decay * w[i] : 0.0);
                buf[i] = opts_.momentum * buf[i] + gi;
                w[i] -= lr * buf[i];
            }
        }
        model_.invalidate();

        m.loss += terms.total.item();
        m.loss_a += terms.a;
        m.loss_b += terms.b;
        m.loss_c += terms.c;
        m.penalty += terms.penalty;
        ++batches;
    }
    if (batches) {
        m.loss /= batches;
        m.loss_a /= batches;
        m.loss_b /= batches;
        m.loss_c /= batches;
        m.penalty /= batches;
    }
    const auto tr = evaluate(model_, train, opts_.train_eval_limit);
    m.train_acc = tr.accuracy;
    m.train_gap = tr.avg_gap;
    if (test) {
        const auto te = evaluate(model_, *test);
        m.test_acc = te.accuracy;
        m.test_gap = te.avg_gap;
    }
    ++state_.epoch;
    return m;
}

std::vector<EpochMetrics> Trainer::fit(const Dataset& train, const Dataset* test,
                                       const std::function<bool(const EpochMetrics&)>& on_epoch) {
    std::vector<EpochMetrics> log;
    while (state_.epoch < opts_.epochs) {
        log.push_back(run_epoch(train, test));
        if (on_epoch && !on_epoch(log.back())) break;
    }
    return log;
}

}  // namespace l2nnn
