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

#include "l2nnn/weights.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "l2nnn/ops.hpp"

namespace l2nnn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapMat = Eigen::Map<RowMat>;

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void require_matrix(const char* op, const Tensor& w) {
    if (w.rank() != 2 || w.numel() == 0) {
        throw ShapeError(std::string(op) + ": expected a non-empty matrix, got " + shape_to_string(w.shape()));
    }
}

struct Grams {
    RowMat wtw;  // [in x in]
    RowMat wwt;  // [out x out]
};

Grams grams(const Tensor& w) {
    ConstMapMat m(w.data().data(), w.dim(0), w.dim(1));
    Grams g;
    g.wtw = m.transpose() * m;
    g.wwt = m * m.transpose();
    return g;
}

Eigen::VectorXd abs_row_sums(const RowMat& m) { return m.cwiseAbs().rowwise().sum(); }

}  // namespace

double max_abs_row_sum(const Tensor& m) {
    require_matrix("max_abs_row_sum", m);
    return ConstMapMat(m.data().data(), m.dim(0), m.dim(1)).cwiseAbs().rowwise().sum().maxCoeff();
}

double weight_bound_b(const Tensor& w) {
    NoGradGuard no_grad;
    return weight_bound(w).item();
}

Tensor weight_bound(const Tensor& w) {
    require_matrix("weight_bound", w);
    const auto g = grams(w);
    Eigen::Index row_a = 0, row_b = 0;
    const double r_a = abs_row_sums(g.wtw).maxCoeff(&row_a);
    const double r_b = abs_row_sums(g.wwt).maxCoeff(&row_b);
    const bool use_a = r_a <= r_b;
    const Eigen::Index arg = use_a ? row_a : row_b;
    // Signs of the active row: the only nonzero part of dr/dM.
    Eigen::VectorXd signs = use_a ? Eigen::VectorXd(g.wtw.row(arg).transpose()) : Eigen::VectorXd(g.wwt.row(arg).transpose());
    for (auto& s : signs) s = sign(s);

    return make_result({1}, {use_a ? r_a : r_b}, {w}, [w, use_a, arg, signs](const Tensor& r) {
        if (!w.requires_grad()) return;
        const double go = r.grad()[0];
        ConstMapMat m(w.data().data(), w.dim(0), w.dim(1));
        MapMat dw(w.grad_mut().data(), w.dim(0), w.dim(1));
        if (use_a) {
            // M = W^T W: dW = W (G + G^T), G nonzero only in row `arg`.
            dw.noalias() += go * m.col(arg) * signs.transpose();
            dw.col(arg).noalias() += go * (m * signs);
        } else {
            // M = W W^T: dW = (G + G^T) W.
            dw.row(arg).noalias() += go * (signs.transpose() * m);
            dw.noalias() += go * signs * m.row(arg);
        }
    });
}

Tensor normalize_weight(const Tensor& w, bool stop_bound_grad) {
    const Tensor b = weight_bound(w);
    const double bv = b.item();
    if (bv <= 0.0) return w;
    if (stop_bound_grad) return ops::scale(w, 1.0 / std::sqrt(bv));
    const Tensor inv_root = make_result({1}, {1.0 / std::sqrt(bv)}, {b}, [b, bv](const Tensor& r) {
        if (b.requires_grad()) b.grad_mut()[0] += r.grad()[0] * (-0.5) * std::pow(bv, -1.5);
    });
    return ops::mul_scalar(w, inv_root);
}

Tensor weight_penalty(const Tensor& w) {
    require_matrix("weight_penalty", w);
    const auto g = grams(w);
    auto hinge = [](const RowMat& m, Eigen::VectorXd& active) {
        const Eigen::VectorXd sums = abs_row_sums(m);
        active = (sums.array() > 1.0).cast<double>();
        return ((sums.array() - 1.0).max(0.0)).sum();
    };
    Eigen::VectorXd act_a, act_b;
    const double l_a = hinge(g.wtw, act_a);
    const double l_b = hinge(g.wwt, act_b);
    const bool use_a = l_a <= l_b;
    if ((use_a ? l_a : l_b) == 0.0) return make_result({1}, {0.0}, {w}, [](const Tensor&) {});

    // G_ij = sign(M_ij) on rows whose hinge is active.
    RowMat gsign = use_a ? g.wtw : g.wwt;
    const Eigen::VectorXd& act = use_a ? act_a : act_b;
    for (Eigen::Index i = 0; i < gsign.rows(); ++i)
        for (Eigen::Index j = 0; j < gsign.cols(); ++j) gsign(i, j) = act(i) * sign(gsign(i, j));

    return make_result({1}, {use_a ? l_a : l_b}, {w}, [w, use_a, gsign](const Tensor& r) {
        if (!w.requires_grad()) return;
        const double go = r.grad()[0];
        ConstMapMat m(w.data().data(), w.dim(0), w.dim(1));
        MapMat dw(w.grad_mut().data(), w.dim(0), w.dim(1));
        const RowMat sym = gsign + gsign.transpose();
        if (use_a)
            dw.noalias() += go * (m * sym);
        else
            dw.noalias() += go * (sym * m);
    });
}

}  // namespace l2nnn
