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
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "l2nnn/model.hpp"

namespace l2nnn {

struct Certificate {
    std::size_t id = 0;
    int label = -1;
    int predicted = -1;
    std::vector<double> logits;
    double gap = 0.0;
    double radius = 0.0;
    CertMode mode = CertMode::multi_l2nnn;
};

/// Largest minus second-largest entry; 0 on ties. Needs at least two entries.
double confidence_gap(std::span<const double> logits);
/// gap / sqrt(2) for a single L2NNN, gap / 2 for per-class heads.
double certified_radius(double gap, CertMode mode);

/// One certificate per row of x, evaluated in chunks of `batch`.
std::vector<Certificate> certify(const Model& model, const Tensor& x, std::span<const int> labels,
                                 std::size_t batch = 256);

/// Tab-separated record: id, label, predicted, gap, radius, mode.
std::string certificate_header();
std::string format_certificate(const Certificate& c);

/// g(x1) + g(x2) <= sqrt(2) * ||y(x1) - y(x2)|| + 1e-9 for two correctly
/// classified inputs of different labels. Throws on a same-label pair.
bool pairwise_gap_bound_check(const Certificate& a, const Certificate& b);

struct JacobianNorm {
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Largest singular value of d(logits)/d(x) at a single input ([1 x ...]).
/// J is assembled from K backward passes, then power iteration runs on J^T J.
JacobianNorm jacobian_l2_norm(const Model& model, const Tensor& x, double tol = 1e-8, int max_iter = 500,
                              std::uint64_t seed = 0);
/// Rows of the Jacobian at x, [K x n].
std::vector<std::vector<double>> jacobian(const Model& model, const Tensor& x);

struct AuditViolation {
    std::size_t pair = 0;
    /// Offending logit in multi mode; npos for the whole vector.
    std::size_t logit = static_cast<std::size_t>(-1);
    double ratio = 0.0;
    /// ||a_i(x1) - a_i(x2)|| / ||a_{i-1}(x1) - a_{i-1}(x2)|| per layer.
    std::vector<double> layer_ratios;
};

struct AuditReport {
    std::size_t pairs = 0;
    double max_ratio = 0.0;
    std::vector<AuditViolation> violations;
};

/// Checks the Lipschitz-1 bound (per logit for multi heads) on rows of x1/x2.
AuditReport model_lipschitz_audit(const Model& model, const Tensor& x1, const Tensor& x2, double tol = 1e-9);

}  // namespace l2nnn
