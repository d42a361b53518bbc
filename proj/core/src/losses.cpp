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

#include "l2nnn/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "l2nnn/ops.hpp"

namespace l2nnn {

void LossConfig::validate() const {
    if (!(z > 0.0)) throw std::invalid_argument("loss: z must be > 0");
    if (gamma < 0.0) throw std::invalid_argument("loss: gamma must be >= 0");
    if (omega < 0.0) throw std::invalid_argument("loss: omega must be >= 0");
    if (penalty_weight < 0.0) throw std::invalid_argument("loss: penalty_weight must be >= 0");
    if (adversarial && !(adv_epsilon > 0.0)) throw std::invalid_argument("loss: adv_epsilon must be > 0");
    if (adversarial && adv_steps < 1) throw std::invalid_argument("loss: adv_steps must be >= 1");
}

LossParams LossParams::init(std::size_t num_classes, const LossConfig& cfg) {
    LossParams p{Tensor::full({num_classes}, 1.0), Tensor::scalar(cfg.v_init)};
    p.u.set_requires_grad(true);
    p.v.set_requires_grad(cfg.train_v);
    return p;
}

std::vector<NamedParam> LossParams::trainable(const LossConfig& cfg) const {
    std::vector<NamedParam> out{{"loss/u", u}};
    if (cfg.train_v) out.push_back({"loss/v", v});
    return out;
}

namespace {

void check_labels(const Tensor& logits, std::span<const int> labels, const char* who) {
    if (logits.rank() != 2) throw ShapeError(std::string(who) + ": logits must be [N x K]");
    if (labels.size() != logits.dim(0)) {
        throw ShapeError(std::string(who) + ": " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(logits.dim(0)) + " rows");
    }
    const int k = static_cast<int>(logits.dim(1));
    for (int l : labels)
        if (l < 0 || l >= k)
            throw std::out_of_range(std::string(who) + ": label " + std::to_string(l) + " outside [0, " +
                                    std::to_string(k) + ")");
}

double log_sum_exp(const double* s, std::size_t k, std::size_t skip = std::numeric_limits<std::size_t>::max()) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j)
        if (j != skip) m = std::max(m, s[j]);
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j)
        if (j != skip) acc += std::exp(s[j] - m);
    return m + std::log(acc);
}

// Mean cross-entropy over per-column scaled logits s_ij = scale_j * y_ij.
Tensor column_scaled_xent(const Tensor& y, std::span<const int> labels, const Tensor& scale) {
    const std::size_t n = y.dim(0), k = y.dim(1);
    if (scale.numel() != k) throw ShapeError("loss_a: u has " + std::to_string(scale.numel()) + " entries, need " +
                                             std::to_string(k));
    std::vector<double> probs(n * k);
    double total = 0.0;
    auto yv = y.data();
    auto sv = scale.data();
    std::vector<double> s(k);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) s[j] = sv[j] * yv[i * k + j];
        const double lse = log_sum_exp(s.data(), k);
        total += lse - s[labels[i]];
        for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(s[j] - lse);
    }
    std::vector<int> lab(labels.begin(), labels.end());
    return make_result({1}, {total / n}, {y, scale}, [y, scale, probs = std::move(probs), lab, n, k](const Tensor& r) {
        const double g = r.grad()[0] / static_cast<double>(n);
        auto yv = y.data();
        auto sv = scale.data();
        std::span<double> gy = y.requires_grad() ? y.grad_mut() : std::span<double>{};
        std::span<double> gs = scale.requires_grad() ? scale.grad_mut() : std::span<double>{};
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < k; ++j) {
                const double ds = g * (probs[i * k + j] - (static_cast<int>(j) == lab[i] ? 1.0 : 0.0));
                if (!gy.empty()) gy[i * k + j] += ds * sv[j];
                if (!gs.empty()) gs[j] += ds * yv[i * k + j];
            }
    });
}

}  // namespace

Tensor loss_a(const Tensor& logits, std::span<const int> labels, const Tensor& u) {
    check_labels(logits, labels, "loss_a");
    return column_scaled_xent(logits, labels, u);
}

Tensor loss_b(const Tensor& logits, std::span<const int> labels, const Tensor& v) {
    check_labels(logits, labels, "loss_b");
    const Tensor ones = Tensor::full({logits.dim(1)}, 1.0);
    return column_scaled_xent(ops::mul_scalar(logits, v), labels, ones);
}

Tensor loss_c(const Tensor& logits, std::span<const int> labels, double z) {
    check_labels(logits, labels, "loss_c");
    if (!(z > 0.0)) throw std::invalid_argument("loss_c: z must be > 0");
    const std::size_t n = logits.dim(0), k = logits.dim(1);
    if (k < 2) throw ShapeError("loss_c: need at least two classes");
    // log(1 - p_l) = LSE_{j != l}(zy) - LSE(zy), computed without cancellation.
    static const double floor_log = std::log(1e-300);
    auto yv = logits.data();
    std::vector<double> grad(n * k, 0.0);
    std::vector<double> s(k);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) s[j] = z * yv[i * k + j];
        const std::size_t l = static_cast<std::size_t>(labels[i]);
        const double all = log_sum_exp(s.data(), k);
        const double rest = log_sum_exp(s.data(), k, l);
        const double v = rest - all;
        if (v <= floor_log) {
            total += floor_log / z;
            continue;
        }
        total += v / z;
        for (std::size_t j = 0; j < k; ++j) {
            const double p = std::exp(s[j] - all);
            const double q = j == l ? 0.0 : std::exp(s[j] - rest);
            grad[i * k + j] = q - p;
        }
    }
    return make_result({1}, {total / n}, {logits}, [logits, grad = std::move(grad), n](const Tensor& r) {
        const double g = r.grad()[0] / static_cast<double>(n);
        auto gy = logits.grad_mut();
        for (std::size_t i = 0; i < grad.size(); ++i) gy[i] += g * grad[i];
    });
}

LossTerms total_loss(const Model& model, const Tensor& x, std::span<const int> labels, const Tensor& x_adv,
                     const LossParams& params, const LossConfig& cfg, const ForwardContext& ctx) {
    const Tensor y = model.forward(x, ctx);
    const Tensor ya = x_adv.defined() ? model.forward(x_adv, ctx) : y;
    LossTerms t;
    const Tensor la = loss_a(ya, labels, params.u);
    t.total = la;
    t.a = la.item();
    if (cfg.gamma != 0.0) {
        const Tensor lb = loss_b(y, labels, params.v);
        t.b = lb.item();
        t.total = ops::add(t.total, ops::scale(lb, cfg.gamma));
    }
    if (cfg.omega != 0.0) {
        const Tensor lc = loss_c(y, labels, cfg.z);
        t.c = lc.item();
        t.total = ops::add(t.total, ops::scale(lc, cfg.omega));
    }
    if (ctx.mode == WeightMode::penalty && cfg.penalty_weight != 0.0) {
        const Tensor pen = model.weight_penalty();
        t.penalty = pen.item();
        t.total = ops::add(t.total, ops::scale(pen, cfg.penalty_weight));
    }
    return t;
}

}  // namespace l2nnn
