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

#include "l2nnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace l2nnn {

std::vector<double> numeric_gradient(const ScalarFn& f, const Tensor& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("numeric_gradient: step must be positive");
    NoGradGuard no_grad;
    Tensor probe = x.detach();
    std::vector<double> out(probe.numel());
    auto d = probe.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
        const double saved = d[i];
        d[i] = saved + h;
        const double up = f(probe).item();
        d[i] = saved - h;
        const double down = f(probe).item();
        d[i] = saved;
        out[i] = (up - down) / (2.0 * h);
    }
    return out;
}

double finite_diff_check(const ScalarFn& f, const Tensor& x, double h) {
    Tensor var = x.detach();
    var.set_requires_grad(true);
    Tape tape;
    Tensor loss;
    {
        TapeGuard guard(tape);
        loss = f(var);
    }
    tape.backward(loss);
    std::vector<double> analytic(var.numel(), 0.0);
    if (!var.grad().empty()) std::copy(var.grad().begin(), var.grad().end(), analytic.begin());

    const auto numeric = numeric_gradient(f, x, h);
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / (std::abs(analytic[i]) + 1e-8));
    return worst;
}

}  // namespace l2nnn
