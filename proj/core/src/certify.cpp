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

#include "l2nnn/certify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "l2nnn/ops.hpp"

namespace l2nnn {

namespace {

Tensor rows(const Tensor& x, std::size_t begin, std::size_t end) {
    Shape shape = x.shape();
    const std::size_t per = x.numel() / shape[0];
    shape[0] = end - begin;
    auto src = x.data();
    return Tensor(shape, std::vector<double>(src.begin() + begin * per, src.begin() + end * per));
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

}  // namespace

double confidence_gap(std::span<const double> logits) {
    if (logits.size() < 2) throw std::invalid_argument("confidence_gap: need at least two logits");
    double first = -std::numeric_limits<double>::infinity(), second = first;
    for (double v : logits) {
        if (v > first) {
            second = first;
            first = v;
        } else if (v > second) {
            second = v;
        }
    }
    return first - second;
}

double certified_radius(double gap, CertMode mode) {
    if (gap < 0.0 || std::isnan(gap)) throw std::invalid_argument("certified_radius: gap must be >= 0");
    return mode == CertMode::multi_l2nnn ? gap / 2.0 : gap / std::sqrt(2.0);
}

std::vector<Certificate> certify(const Model& model, const Tensor& x, std::span<const int> labels, std::size_t batch) {
    const std::size_t n = x.dim(0);
    if (!labels.empty() && labels.size() != n) throw ShapeError("certify: label count does not match inputs");
    const std::size_t k = model.num_classes();
    std::vector<Certificate> out;
    out.reserve(n);
    for (std::size_t b = 0; b < n; b += batch) {
        const std::size_t e = std::min(n, b + batch);
        const Tensor y = model.logits(rows(x, b, e));
        auto yv = y.data();
        for (std::size_t i = b; i < e; ++i) {
            Certificate c;
            c.id = i;
            c.label = labels.empty() ? -1 : labels[i];
            c.logits.assign(yv.begin() + (i - b) * k, yv.begin() + (i - b + 1) * k);
            c.predicted = static_cast<int>(argmax(c.logits));
            c.gap = confidence_gap(c.logits);
            c.mode = model.cert_mode();
            c.radius = certified_radius(c.gap, c.mode);
            out.push_back(std::move(c));
        }
    }
    return out;
}

std::string certificate_header() { return "id\tlabel\tpredicted\tgap\tradius\tmode"; }

std::string format_certificate(const Certificate& c) {
    std::ostringstream os;
    os.precision(17);
    os << c.id << '\t' << c.label << '\t' << c.predicted << '\t' << c.gap << '\t' << c.radius << '\t'
       << to_string(c.mode);
    return os.str();
}

bool pairwise_gap_bound_check(const Certificate& a, const Certificate& b) {
    if (a.label == b.label) throw std::invalid_argument("pairwise_gap_bound_check: pair shares label " + std::to_string(a.label));
    if (a.logits.size() != b.logits.size()) throw ShapeError("pairwise_gap_bound_check: logit counts differ");
    const double d = l2_distance(a.logits, b.logits);
    return a.gap + b.gap <= std::sqrt(2.0) * d + 1e-9;
}

std::vector<std::vector<double>> jacobian(const Model& model, const Tensor& x) {
    if (x.dim(0) != 1) throw ShapeError("jacobian: expects a single input [1 x ...]");
    const std::size_t k = model.num_classes();
    std::vector<std::vector<double>> jac;
    jac.reserve(k);
    Tensor xin = x.detach();
    xin.set_requires_grad(true);
    // One forward pass; each logit gets its own backward sweep over the tape.
    Tape tape;
    std::vector<Tensor> picks;
    {
        TapeGuard guard(tape);
        const Tensor y = model.forward(xin, model.eval_context());
        for (std::size_t c = 0; c < k; ++c) picks.push_back(ops::reshape(ops::slice_channels(y, c, c + 1), {1}));
    }
    for (std::size_t c = 0; c < k; ++c) {
        tape.backward(picks[c]);
        auto g = xin.grad();
        jac.emplace_back(g.begin(), g.end());
        if (jac.back().empty()) jac.back().assign(xin.numel(), 0.0);
    }
    return jac;
}

JacobianNorm jacobian_l2_norm(const Model& model, const Tensor& x, double tol, int max_iter, std::uint64_t seed) {
    const auto jac = jacobian(model, x);
    const std::size_t n = x.numel();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    auto random_unit = [&]() {
        std::vector<double> v(n);
        double nrm = 0.0;
        for (auto& e : v) {
            e = gauss(rng);
            nrm += e * e;
        }
        nrm = std::sqrt(nrm);
        for (auto& e : v) e /= nrm;
        return v;
    };
    // w = J^T J v
    auto apply = [&](const std::vector<double>& v) {
        std::vector<double> w(n, 0.0);
        for (const auto& row : jac) {
            double dot = 0.0;
            for (std::size_t i = 0; i < n; ++i) dot += row[i] * v[i];
            for (std::size_t i = 0; i < n; ++i) w[i] += dot * row[i];
        }
        return w;
    };
    JacobianNorm out;
    std::vector<double> v = random_unit();
    double lambda = 0.0;
    int restarts = 0;
    for (int it = 1; it <= max_iter; ++it) {
        auto w = apply(v);
        double nrm = 0.0;
        for (double e : w) nrm += e * e;
        nrm = std::sqrt(nrm);
        out.iterations = it;
        if (nrm == 0.0) {
            // Landed in the null space. A couple of fresh directions decide
            // whether J itself is zero.
            if (++restarts > 2) {
                out.converged = true;
                break;
            }
            v = random_unit();
            continue;
        }
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nrm;
        const bool done = std::abs(nrm - lambda) <= tol * std::max(1.0, nrm);
        lambda = nrm;
        if (done) {
            out.converged = true;
            break;
        }
    }
    out.value = std::sqrt(lambda);
    return out;
}

AuditReport model_lipschitz_audit(const Model& model, const Tensor& x1, const Tensor& x2, double tol) {
    if (x1.shape() != x2.shape()) throw ShapeError("audit: pair tensors differ in shape");
    AuditReport report;
    report.pairs = x1.dim(0);
    const bool multi = model.cert_mode() == CertMode::multi_l2nnn;
    NoGradGuard no_grad;
    const auto t1 = model.forward_trace(x1, model.eval_context());
    const auto t2 = model.forward_trace(x2, model.eval_context());
    const Tensor y1 = model.logits(x1), y2 = model.logits(x2);
    const std::size_t k = model.num_classes();
    const std::size_t per_in = x1.numel() / report.pairs;
    for (std::size_t p = 0; p < report.pairs; ++p) {
        const double din = l2_distance(x1.data().subspan(p * per_in, per_in), x2.data().subspan(p * per_in, per_in));
        auto a = y1.data().subspan(p * k, k), b = y2.data().subspan(p * k, k);
        std::vector<std::pair<std::size_t, double>> outs;  // (logit, |dy|)
        if (multi) {
            for (std::size_t c = 0; c < k; ++c) outs.emplace_back(c, std::abs(a[c] - b[c]));
        } else {
            outs.emplace_back(static_cast<std::size_t>(-1), l2_distance(a, b));
        }
        for (const auto& [logit, dout] : outs) {
            const double ratio = din > 0.0 ? dout / din : (dout > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
            report.max_ratio = std::max(report.max_ratio, ratio);
            if (dout <= din + tol) continue;
            AuditViolation v{p, logit, ratio, {}};
            for (std::size_t l = 1; l < t1.size(); ++l) {
                const std::size_t prev = t1[l - 1].numel() / report.pairs, cur = t1[l].numel() / report.pairs;
                const double dp = l2_distance(t1[l - 1].data().subspan(p * prev, prev), t2[l - 1].data().subspan(p * prev, prev));
                const double dc = l2_distance(t1[l].data().subspan(p * cur, cur), t2[l].data().subspan(p * cur, cur));
                v.layer_ratios.push_back(dp > 0.0 ? dc / dp : 0.0);
            }
            report.violations.push_back(std::move(v));
        }
    }
    return report;
}

}  // namespace l2nnn
