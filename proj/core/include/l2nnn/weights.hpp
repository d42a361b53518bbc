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

#include "l2nnn/tensor.hpp"

// Spectral bounds for weight matrices.
//
// For W of shape [out x in], with r(M) the largest absolute row sum,
//   b(W) = min(r(W^T W), r(W W^T)) >= rho(W^T W) = sigma_max(W)^2,
// so W / sqrt(b(W)) is nonexpansive under the L2 norm.
namespace l2nnn {

/// Largest absolute row sum of a rank-2 tensor.
double max_abs_row_sum(const Tensor& m);

/// b(W) as a plain value.
double weight_bound_b(const Tensor& w);

/// b(W) as a taped scalar. The subgradient follows the argmax row of
/// whichever Gram matrix attains the min.
Tensor weight_bound(const Tensor& w);

/// W / sqrt(b(W)), taped. An all-zero W is returned as is. When
/// `stop_bound_grad` is set the divisor is treated as a constant.
Tensor normalize_weight(const Tensor& w, bool stop_bound_grad = false);

/// min(l(W^T W), l(W W^T)) with l(M) = sum_i max(sum_j |M_ij| - 1, 0).
/// Zero exactly when b(W) <= 1. Taped.
Tensor weight_penalty(const Tensor& w);

}  // namespace l2nnn
