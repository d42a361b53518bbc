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

#include "l2nnn/attack.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "l2nnn/certify.hpp"

namespace l2nnn {

void AttackConfig::validate() const {
    if (!(epsilon > 0.0)) throw std::invalid_argument("attack: epsilon must be > 0");
    if (steps < 1) throw std::invalid_argument("attack: steps must be >= 1");
    if (step_size < 0.0) throw std::invalid_argument("attack: step_size must be > 0 (or 0 for the default)");
    if (restarts < 1) throw std::invalid_argument("attack: restarts must be >= 1");
    if (!(box_lo < box_hi)) throw std::invalid_argument("attack: empty box");
}

double AttackConfig::effective_step(double eps) const {
    return step_size > 0.0 ? step_size : 2.0 * eps / std::sqrt(static_cast<double>(steps));
}

namespace {

// Sum over rows of (max_{k != l} y_k - y_l).
Tensor margin_sum(const Tensor& y, const std::vector<int>& labels) {
    const std::size_t n = y.dim(0), k = y.dim(1);
    auto yv = y.data();
    std::vector<std::size_t> runner(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t l = static_cast<std::size_t>(labels[i]);
        std::size_t best = l == 0 ? 1 : 0;
        for (std::size_t j = 0; j < k; ++j)
            if (j != l && yv[i * k + j] > yv[i * k + best]) best = j;
        runner[i] = best;
        total += yv[i * k + best] - yv[i * k + l];
    }
    return make_result({1}, {total}, {y}, [y, runner, labels, k](const Tensor& r) {
        const double g = r.grad()[0];
        auto gy = y.grad_mut();
        for (std::size_t i = 0; i < runner.size(); ++i) {
            gy[i * k + runner[i]] += g;
            gy[i * k + static_cast<std::size_t>(labels[i])] -= g;
        }
    });
}

double norm2(std::span<const double> v) {
    double acc = 0.0;
    for (double e : v) acc += e * e;
    return std::sqrt(acc);
}

}  // namespace

std::vector<AttackResult> pgd_l2_batch(const Model& model, const Tensor& x, std::span<const int> labels,
                                       std::span<const double> eps, const AttackConfig& cfg, bool first_success) {
    {
        AttackConfig probe = cfg;
        probe.epsilon = 1.0;
        probe.validate();
    }
    const std::size_t n = x.dim(0);
    if (labels.size() != n || eps.size() != n) throw ShapeError("pgd_l2_batch: labels/eps do not match inputs");
    for (double e : eps)
        if (!(e > 0.0)) throw std::invalid_argument("attack: epsilon must be > 0");
    const std::size_t per = x.numel() / n;
    const std::size_t k = model.num_classes();
    Shape row_shape = x.shape();
    row_shape[0] = 1;
    auto xv = x.data();

    std::vector<AttackResult> best(n);
    for (std::size_t i = 0; i < n; ++i)
        best[i].adversarial = Tensor(row_shape, std::vector<double>(xv.begin() + i * per, xv.begin() + (i + 1) * per));

    const ForwardContext ctx = model.eval_context();
    std::vector<double> delta(n * per);
    for (int restart = 0; restart < cfg.restarts; ++restart) {
        std::vector<std::size_t> live;
        for (std::size_t i = 0; i < n; ++i)
            if (!(first_success && best[i].success)) live.push_back(i);
        if (live.empty()) break;

        std::mt19937_64 rng(cfg.seed * 1000003ULL + static_cast<std::uint64_t>(restart));
        std::normal_distribution<double> gauss;
        std::uniform_real_distribution<double> unit;
        for (std::size_t i : live) {
            double* d = &delta[i * per];
            if (restart == 0) {
                std::fill(d, d + per, 0.0);
                continue;
            }
            // Uniform point in the ball, then clipped into the box.
            for (std::size_t j = 0; j < per; ++j) d[j] = gauss(rng);
            const double r = eps[i] * std::pow(unit(rng), 1.0 / static_cast<double>(per)) / norm2({d, per});
            for (std::size_t j = 0; j < per; ++j)
                d[j] = std::clamp(xv[i * per + j] + d[j] * r, cfg.box_lo, cfg.box_hi) - xv[i * per + j];
        }

        for (int step = 0; !live.empty(); ++step) {
            Shape bshape = x.shape();
            bshape[0] = live.size();
            std::vector<double> xb(live.size() * per);
            for (std::size_t a = 0; a < live.size(); ++a)
                for (std::size_t j = 0; j < per; ++j)
                    xb[a * per + j] = xv[live[a] * per + j] + delta[live[a] * per + j];
            Tensor input(bshape, std::move(xb));
            input.set_requires_grad(step < cfg.steps);

            Tape tape;
            Tensor y;
            {
                TapeGuard guard(tape);
                y = model.forward(input, ctx);
            }
            auto yv = y.data();
            std::vector<std::size_t> still;
            std::vector<std::size_t> still_pos;
            for (std::size_t a = 0; a < live.size(); ++a) {
                const std::size_t i = live[a];
                const std::size_t pred = argmax(yv.subspan(a * k, k));
                if (static_cast<int>(pred) != labels[i]) {
                    const double dist = norm2({&delta[i * per], per});
                    if (!best[i].success || dist < best[i].distortion) {
                        auto in = input.data();
                        best[i].adversarial = Tensor(row_shape, std::vector<double>(in.begin() + a * per, in.begin() + (a + 1) * per));
                        best[i].distortion = dist;
                        best[i].success = true;
                        best[i].iterations_used = step;
                    }
                    continue;
                }
                if (!best[i].success) best[i].iterations_used = step;
                still.push_back(i);
                still_pos.push_back(a);
            }
            if (step == cfg.steps || still.empty()) break;

            // Rows are independent, so one backward of the summed margin yields
            // every per-row gradient; rows that already broke are not updated.
            {
                std::vector<int> live_labels(live.size());
                for (std::size_t a = 0; a < live.size(); ++a) live_labels[a] = labels[live[a]];
                TapeGuard guard(tape);
                const Tensor m = margin_sum(y, live_labels);
                tape.backward(m);
            }
            auto g = input.grad();
            for (std::size_t s = 0; s < still.size(); ++s) {
                const std::size_t a = still_pos[s], i = still[s];
                const double alpha = cfg.effective_step(eps[i]);
                const double gn = norm2(g.subspan(a * per, per));
                double* d = &delta[i * per];
                if (gn > 0.0)
                    for (std::size_t j = 0; j < per; ++j) d[j] += alpha * g[a * per + j] / gn;
                const double dn = norm2({d, per});
                if (dn > eps[i])
                    for (std::size_t j = 0; j < per; ++j) d[j] *= eps[i] / dn;
                for (std::size_t j = 0; j < per; ++j)
                    d[j] = std::clamp(xv[i * per + j] + d[j], cfg.box_lo, cfg.box_hi) - xv[i * per + j];
            }
            live = std::move(still);
        }
    }
    return best;
}

AttackResult pgd_l2(const Model& model, const Tensor& x, int label, const AttackConfig& cfg) {
    cfg.validate();
    if (x.dim(0) != 1) throw ShapeError("pgd_l2: expects a single input [1 x ...]");
    const int labels[1] = {label};
    const double eps[1] = {cfg.epsilon};
    return pgd_l2_batch(model, x, labels, eps, cfg).front();
}

std::vector<double> min_distortion_batch(const Model& model, const Tensor& x, std::span<const int> labels,
                                         const AttackConfig& cfg, double eps_max, int halvings) {
    if (!(eps_max > 0.0)) throw std::invalid_argument("min_distortion_search: eps_max must be > 0");
    const std::size_t n = x.dim(0);
    const std::size_t per = x.numel() / n;
    std::vector<double> lo(n, 0.0), hi(n, kNoAttackFound);

    auto probe = [&](const std::vector<std::size_t>& idx, const std::vector<double>& eps) {
        Shape shape = x.shape();
        shape[0] = idx.size();
        std::vector<double> xs(idx.size() * per);
        std::vector<int> ls(idx.size());
        for (std::size_t a = 0; a < idx.size(); ++a) {
            std::copy_n(x.data().begin() + idx[a] * per, per, xs.begin() + a * per);
            ls[a] = labels[idx[a]];
        }
        return pgd_l2_batch(model, Tensor(shape, std::move(xs)), ls, eps, cfg, true);
    };

    std::vector<std::size_t> all(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    const auto first = probe(all, std::vector<double>(n, eps_max));
    std::vector<std::size_t> open;
    for (std::size_t i = 0; i < n; ++i) {
        if (!first[i].success) continue;
        hi[i] = std::min(eps_max, first[i].distortion);
        open.push_back(i);
    }
    for (int h = 0; h < halvings && !open.empty(); ++h) {
        std::vector<std::size_t> idx;
        std::vector<double> mids;
        for (std::size_t i : open) {
            const double mid = 0.5 * (lo[i] + hi[i]);
            if (mid <= 0.0) continue;
            idx.push_back(i);
            mids.push_back(mid);
        }
        if (idx.empty()) break;
        const auto res = probe(idx, mids);
        for (std::size_t a = 0; a < idx.size(); ++a) {
            const std::size_t i = idx[a];
            if (res[a].success) hi[i] = std::min(mids[a], res[a].distortion);
            else lo[i] = mids[a];
        }
    }
    return hi;
}

double min_distortion_search(const Model& model, const Tensor& x, int label, const AttackConfig& cfg, double eps_max,
                             int halvings) {
    if (x.dim(0) != 1) throw ShapeError("min_distortion_search: expects a single input [1 x ...]");
    const int labels[1] = {label};
    return min_distortion_batch(model, x, labels, cfg, eps_max, halvings).front();
}

SweepResult iteration_sweep(const Model& model, const Tensor& x, std::span<const int> labels, double eps,
                            std::span<const int> ladder, const AttackConfig& cfg) {
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        if (ladder[i] < 0) throw std::invalid_argument("iteration_sweep: negative budget");
        if (i && ladder[i] <= ladder[i - 1]) throw std::invalid_argument("iteration_sweep: ladder must be ascending");
    }
    const std::size_t n = x.dim(0);
    const std::size_t per = x.numel() / n;
    const auto certs = certify(model, x, labels);
    std::vector<bool> robust(n);
    for (std::size_t i = 0; i < n; ++i) robust[i] = certs[i].predicted == labels[i];
    const bool check_radius = model.mode() != WeightMode::unconstrained;

    SweepResult out;
    for (int budget : ladder) {
        if (budget > 0 && eps > 0.0) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < n; ++i)
                if (robust[i]) idx.push_back(i);
            if (!idx.empty()) {
                Shape shape = x.shape();
                shape[0] = idx.size();
                std::vector<double> xs(idx.size() * per);
                std::vector<int> ls(idx.size());
                for (std::size_t a = 0; a < idx.size(); ++a) {
                    std::copy_n(x.data().begin() + idx[a] * per, per, xs.begin() + a * per);
                    ls[a] = labels[idx[a]];
                }
                AttackConfig rung = cfg;
                rung.steps = budget;
                const auto res = pgd_l2_batch(model, Tensor(shape, std::move(xs)), ls,
                                              std::vector<double>(idx.size(), eps), rung, true);
                for (std::size_t a = 0; a < idx.size(); ++a) {
                    if (!res[a].success) continue;
                    robust[idx[a]] = false;
                    if (check_radius && res[a].distortion < certs[idx[a]].radius - 1e-9) ++out.violations;
                }
            }
        }
        SweepRow row{budget, 0, n};
        for (bool r : robust) row.robust += r ? 1 : 0;
        out.rows.push_back(row);
    }
    return out;
}

}  // namespace l2nnn
