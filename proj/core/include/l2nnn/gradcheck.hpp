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

#include <functional>

#include "l2nnn/tensor.hpp"

namespace l2nnn {

using ScalarFn = std::function<Tensor(const Tensor&)>;

/// Compares the taped gradient of `f` at `x` against central differences
/// with step `h`. Returns max_i |analytic_i - numeric_i| / (|analytic_i| + 1e-8).
/// `x` is not modified.
double finite_diff_check(const ScalarFn& f, const Tensor& x, double h);

/// Central-difference gradient of `f` at `x`, no tape involved.
std::vector<double> numeric_gradient(const ScalarFn& f, const Tensor& x, double h);

}  // namespace l2nnn
