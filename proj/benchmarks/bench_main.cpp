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

#include <benchmark/benchmark.h>

#include <random>

#include "l2nnn/attack.hpp"
#include "l2nnn/losses.hpp"
#include "l2nnn/model.hpp"
#include "l2nnn/weights.hpp"

namespace {

using namespace l2nnn;

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    for (auto& v : t.data()) v = u(rng);
    return t;
}

void BM_WeightBound(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor w = random_tensor({n, 4 * n}, 1, -1.0, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(weight_bound_b(w));
}
BENCHMARK(BM_WeightBound)->Arg(32)->Arg(128);

void BM_ForwardEval(benchmark::State& state) {
    const Model model(default_arch(), 0);
    const auto batch = static_cast<std::size_t>(state.range(0));
    const Tensor x = random_tensor({batch, 1, 28, 28}, 2);
    for (auto _ : state) benchmark::DoNotOptimize(model.logits(x));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_ForwardEval)->Arg(1)->Arg(64)->Arg(500);

void BM_TrainStep(benchmark::State& state) {
    const Model model(default_arch(), 0);
    const LossConfig cfg;
    const LossParams params = LossParams::init(10, cfg);
    const Tensor x = random_tensor({64, 1, 28, 28}, 3);
    std::vector<int> labels(64);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
    const auto mode = static_cast<WeightMode>(state.range(0));
    for (auto _ : state) {
        Tape tape;
        LossTerms terms;
        {
            TapeGuard guard(tape);
            terms = total_loss(model, x, labels, {}, params, cfg, {mode, Phase::train, nullptr, false});
        }
        tape.backward(terms.total);
    }
}
BENCHMARK(BM_TrainStep)->Arg(static_cast<int>(WeightMode::rescale))->Arg(static_cast<int>(WeightMode::penalty));

void BM_PgdStep(benchmark::State& state) {
    const Model model(default_arch(), 0);
    const auto batch = static_cast<std::size_t>(state.range(0));
    const Tensor x = random_tensor({batch, 1, 28, 28}, 4);
    std::vector<int> labels(batch, 0);
    AttackConfig cfg;
    cfg.steps = 10;
    cfg.restarts = 1;
    for (auto _ : state)
        benchmark::DoNotOptimize(pgd_l2_batch(model, x, labels, std::vector<double>(batch, 0.01), cfg));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch) * cfg.steps);
}
BENCHMARK(BM_PgdStep)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
