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

#include "l2nnn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace l2nnn::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
    }
}

void require_rank(const char* op, const Tensor& a, std::size_t rank) {
    if (a.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_to_string(a.shape()));
    }
}

// Elementwise unary op given value and derivative-from-(input, output).
template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D dfdx) {
    std::vector<double> out(a.numel());
    auto in = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    return make_result(a.shape(), std::move(out), {a}, [a, dfdx](const Tensor& r) {
        if (!a.requires_grad()) return;
        auto g = a.grad_mut();
        auto x = a.data();
        auto y = r.data();
        auto go = r.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * dfdx(x[i], y[i]);
    });
}

void accumulate(const Tensor& t, std::span<const double> g, double factor = 1.0) {
    if (!t.requires_grad()) return;
    auto dst = t.grad_mut();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](const Tensor& r) {
        accumulate(a, r.grad());
        accumulate(b, r.grad());
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](const Tensor& r) {
        accumulate(a, r.grad());
        accumulate(b, r.grad(), -1.0);
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return make_result(a.shape(), std::move(out), {a, b}, [a, b](const Tensor& r) {
        auto go = r.grad();
        if (a.requires_grad()) {
            auto g = a.grad_mut();
            auto y = b.data();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * y[i];
        }
        if (b.requires_grad()) {
            auto g = b.grad_mut();
            auto x = a.data();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * x[i];
        }
    });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= factor;
    return make_result(a.shape(), std::move(out), {a},
                       [a, factor](const Tensor& r) { accumulate(a, r.grad(), factor); });
}

Tensor mul_scalar(const Tensor& a, const Tensor& s) {
    if (s.numel() != 1) throw ShapeError("mul_scalar: scale must hold one value, got " + shape_to_string(s.shape()));
    const double k = s.item();
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= k;
    return make_result(a.shape(), std::move(out), {a, s}, [a, s](const Tensor& r) {
        auto go = r.grad();
        accumulate(a, go, s.item());
        if (s.requires_grad()) {
            double acc = 0.0;
            auto x = a.data();
            for (std::size_t i = 0; i < go.size(); ++i) acc += go[i] * x[i];
            s.grad_mut()[0] += acc;
        }
    });
}

Tensor add_scalar(const Tensor& a, double value) {
    std::vector<double> out(a.data().begin(), a.data().end());
    for (auto& v : out) v += value;
    return make_result(a.shape(), std::move(out), {a}, [a](const Tensor& r) { accumulate(a, r.grad()); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner dims differ, " + shape_to_string(a.shape()) + " * " +
                         shape_to_string(b.shape()));
    }
    std::vector<double> out(m * n);
    MapMat(out.data(), m, n).noalias() = ConstMapMat(a.data().data(), m, k) * ConstMapMat(b.data().data(), k, n);
    return make_result({m, n}, std::move(out), {a, b}, [a, b, m, k, n](const Tensor& r) {
        ConstMapMat go(r.grad().data(), m, n);
        if (a.requires_grad()) MapMat(a.grad_mut().data(), m, k).noalias() += go * ConstMapMat(b.data().data(), k, n).transpose();
        if (b.requires_grad()) MapMat(b.grad_mut().data(), k, n).noalias() += ConstMapMat(a.data().data(), m, k).transpose() * go;
    });
}

Tensor transpose(const Tensor& a) {
    require_rank("transpose", a, 2);
    const auto m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    MapMat(out.data(), n, m) = ConstMapMat(a.data().data(), m, n).transpose();
    return make_result({n, m}, std::move(out), {a}, [a, m, n](const Tensor& r) {
        if (a.requires_grad()) MapMat(a.grad_mut().data(), m, n) += ConstMapMat(r.grad().data(), n, m).transpose();
    });
}

Tensor linear(const Tensor& x, const Tensor& weight) {
    require_rank("linear", x, 2);
    require_rank("linear", weight, 2);
    const auto batch = x.dim(0), in = x.dim(1), out_f = weight.dim(0);
    if (weight.dim(1) != in) {
        throw ShapeError("linear: input has " + std::to_string(in) + " features, weight is " +
                         shape_to_string(weight.shape()));
    }
    std::vector<double> out(batch * out_f);
    MapMat(out.data(), batch, out_f).noalias() =
        ConstMapMat(x.data().data(), batch, in) * ConstMapMat(weight.data().data(), out_f, in).transpose();
    return make_result({batch, out_f}, std::move(out), {x, weight}, [x, weight, batch, in, out_f](const Tensor& r) {
        ConstMapMat go(r.grad().data(), batch, out_f);
        if (x.requires_grad())
            MapMat(x.grad_mut().data(), batch, in).noalias() += go * ConstMapMat(weight.data().data(), out_f, in);
        if (weight.requires_grad())
            MapMat(weight.grad_mut().data(), out_f, in).noalias() += go.transpose() * ConstMapMat(x.data().data(), batch, in);
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
        throw ShapeError("add_bias: bias " + shape_to_string(bias.shape()) + " does not match axis 1 of " +
                         shape_to_string(x.shape()));
    }
    const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
    std::vector<double> out(x.data().begin(), x.data().end());
    auto b = bias.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            double* p = out.data() + (i * c + j) * inner;
            for (std::size_t k = 0; k < inner; ++k) p[k] += b[j];
        }
    return make_result(x.shape(), std::move(out), {x, bias}, [x, bias, n, c, inner](const Tensor& r) {
        auto go = r.grad();
        accumulate(x, go);
        if (bias.requires_grad()) {
            auto gb = bias.grad_mut();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    const double* p = go.data() + (i * c + j) * inner;
                    double acc = 0.0;
                    for (std::size_t k = 0; k < inner; ++k) acc += p[k];
                    gb[j] += acc;
                }
        }
    });
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double v : a.data()) acc += v;
    return make_result({1}, {acc}, {a}, [a](const Tensor& r) {
        if (!a.requires_grad()) return;
        const double g = r.grad()[0];
        for (auto& v : a.grad_mut()) v += g;
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    return make_result(std::move(shape), std::move(out), {a}, [a](const Tensor& r) { accumulate(a, r.grad()); });
}

Tensor concat(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || a.rank() != b.rank() || a.dim(0) != b.dim(0)) {
        throw ShapeError("concat: incompatible " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
    }
    for (std::size_t ax = 2; ax < a.rank(); ++ax)
        if (a.dim(ax) != b.dim(ax))
            throw ShapeError("concat: incompatible " + shape_to_string(a.shape()) + " and " + shape_to_string(b.shape()));
    const std::size_t n = a.dim(0);
    const std::size_t block_a = a.numel() / n, block_b = b.numel() / n;
    Shape shape = a.shape();
    shape[1] += b.dim(1);
    std::vector<double> out(a.numel() + b.numel());
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(a.data().data() + i * block_a, block_a, out.data() + i * (block_a + block_b));
        std::copy_n(b.data().data() + i * block_b, block_b, out.data() + i * (block_a + block_b) + block_a);
    }
    return make_result(std::move(shape), std::move(out), {a, b}, [a, b, n, block_a, block_b](const Tensor& r) {
        auto go = r.grad();
        if (a.requires_grad()) {
            auto g = a.grad_mut();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < block_a; ++k) g[i * block_a + k] += go[i * (block_a + block_b) + k];
        }
        if (b.requires_grad()) {
            auto g = b.grad_mut();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < block_b; ++k) g[i * block_b + k] += go[i * (block_a + block_b) + block_a + k];
        }
    });
}

Tensor slice_channels(const Tensor& a, std::size_t begin, std::size_t end) {
    if (a.rank() < 2 || begin > end || end > a.dim(1)) {
        throw ShapeError("slice_channels: [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of " +
                         shape_to_string(a.shape()));
    }
    const std::size_t n = a.dim(0), c = a.dim(1), inner = a.numel() / (n * c), width = end - begin;
    Shape shape = a.shape();
    shape[1] = width;
    std::vector<double> out(n * width * inner);
    for (std::size_t i = 0; i < n; ++i)
        std::copy_n(a.data().data() + (i * c + begin) * inner, width * inner, out.data() + i * width * inner);
    return make_result(std::move(shape), std::move(out), {a}, [a, n, c, inner, begin, width](const Tensor& r) {
        if (!a.requires_grad()) return;
        auto g = a.grad_mut();
        auto go = r.grad();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < width * inner; ++k) g[(i * c + begin) * inner + k] += go[i * width * inner + k];
    });
}

Tensor row(const Tensor& a, std::size_t k) {
    require_rank("row", a, 2);
    if (k >= a.dim(0)) throw ShapeError("row: index " + std::to_string(k) + " out of " + shape_to_string(a.shape()));
    const std::size_t n = a.dim(1);
    std::vector<double> out(a.data().begin() + k * n, a.data().begin() + (k + 1) * n);
    return make_result({1, n}, std::move(out), {a}, [a, k, n](const Tensor& r) {
        if (!a.requires_grad()) return;
        auto g = a.grad_mut();
        auto go = r.grad();
        for (std::size_t j = 0; j < n; ++j) g[k * n + j] += go[j];
    });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no rows");
    const std::size_t n = rows.front().numel();
    std::vector<double> out;
    out.reserve(rows.size() * n);
    for (const auto& r : rows) {
        if (r.numel() != n) throw ShapeError("stack_rows: ragged rows");
        out.insert(out.end(), r.data().begin(), r.data().end());
    }
    return make_result({rows.size(), n}, std::move(out), rows, [rows, n](const Tensor& r) {
        auto go = r.grad();
        for (std::size_t k = 0; k < rows.size(); ++k) accumulate(rows[k], go.subspan(k * n, n));
    });
}

Tensor relu(const Tensor& a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& a) {
    return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor exp(const Tensor& a) {
    return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
    return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor square(const Tensor& a) {
    return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
                 [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor complement(const Tensor& a) {
    return unary(a, [](double x) { return std::sqrt(std::max(1.0 - x * x, 0.0)); },
                 [](double x, double y) { return y > 0.0 ? -x / y : 0.0; });
}

WindowDims window_dims(std::size_t h, std::size_t w, const WindowGeometry& g) {
    if (g.k1 == 0 || g.k2 == 0 || g.s1 == 0 || g.s2 == 0) throw ShapeError("window: zero kernel or stride");
    WindowDims d{};
    if (g.padding == Padding::valid) {
        if (h < g.k1 || w < g.k2) {
            throw ShapeError("window: " + std::to_string(g.k1) + "x" + std::to_string(g.k2) + " does not fit in " +
                             std::to_string(h) + "x" + std::to_string(w));
        }
        d.out_h = (h - g.k1) / g.s1 + 1;
        d.out_w = (w - g.k2) / g.s2 + 1;
        d.pad_top = d.pad_left = 0;
    } else {
        d.out_h = (h + g.s1 - 1) / g.s1;
        d.out_w = (w + g.s2 - 1) / g.s2;
        const std::size_t need_h = (d.out_h - 1) * g.s1 + g.k1;
        const std::size_t need_w = (d.out_w - 1) * g.s2 + g.k2;
        d.pad_top = need_h > h ? (need_h - h) / 2 : 0;
        d.pad_left = need_w > w ? (need_w - w) / 2 : 0;
    }
    return d;
}

namespace {

// Column matrix [C*k1*k2 x N*Ho*Wo]; out-of-plane taps read as zero.
void im2col(const double* x, std::size_t n, std::size_t c, std::size_t h, std::size_t w, const WindowGeometry& g,
            const WindowDims& d, double* cols) {
    const std::size_t plane = d.out_h * d.out_w;
    const std::size_t ncols = n * plane;
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t a = 0; a < g.k1; ++a)
            for (std::size_t b = 0; b < g.k2; ++b) {
                double* dst = cols + ((ci * g.k1 + a) * g.k2 + b) * ncols;
                for (std::size_t ni = 0; ni < n; ++ni) {
                    const double* src = x + (ni * c + ci) * h * w;
                    for (std::size_t oy = 0; oy < d.out_h; ++oy) {
                        const long iy = static_cast<long>(oy * g.s1 + a) - static_cast<long>(d.pad_top);
                        for (std::size_t ox = 0; ox < d.out_w; ++ox) {
                            const long ix = static_cast<long>(ox * g.s2 + b) - static_cast<long>(d.pad_left);
                            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(h) && ix < static_cast<long>(w);
                            dst[ni * plane + oy * d.out_w + ox] = inside ? src[iy * w + ix] : 0.0;
                        }
                    }
                }
            }
}

void col2im(const double* cols, std::size_t n, std::size_t c, std::size_t h, std::size_t w, const WindowGeometry& g,
            const WindowDims& d, double* dx) {
    const std::size_t plane = d.out_h * d.out_w;
    const std::size_t ncols = n * plane;
    for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t a = 0; a < g.k1; ++a)
            for (std::size_t b = 0; b < g.k2; ++b) {
                const double* src = cols + ((ci * g.k1 + a) * g.k2 + b) * ncols;
                for (std::size_t ni = 0; ni < n; ++ni) {
                    double* dst = dx + (ni * c + ci) * h * w;
                    for (std::size_t oy = 0; oy < d.out_h; ++oy) {
                        const long iy = static_cast<long>(oy * g.s1 + a) - static_cast<long>(d.pad_top);
                        if (iy < 0 || iy >= static_cast<long>(h)) continue;
                        for (std::size_t ox = 0; ox < d.out_w; ++ox) {
                            const long ix = static_cast<long>(ox * g.s2 + b) - static_cast<long>(d.pad_left);
                            if (ix < 0 || ix >= static_cast<long>(w)) continue;
                            dst[iy * w + ix] += src[ni * plane + oy * d.out_w + ox];
                        }
                    }
                }
            }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const WindowGeometry& g) {
    require_rank("conv2d", x, 4);
    require_rank("conv2d", weight, 2);
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t o = weight.dim(0), patch = c * g.k1 * g.k2;
    if (weight.dim(1) != patch) {
        throw ShapeError("conv2d: weight " + shape_to_string(weight.shape()) + " expects patches of " +
                         std::to_string(weight.dim(1)) + ", input " + shape_to_string(x.shape()) + " gives " +
                         std::to_string(patch));
    }
    const WindowDims d = window_dims(h, w, g);
    const std::size_t plane = d.out_h * d.out_w, ncols = n * plane;
    auto cols = std::make_shared<std::vector<double>>(patch * ncols);
    im2col(x.data().data(), n, c, h, w, g, d, cols->data());
    RowMat prod = ConstMapMat(weight.data().data(), o, patch) * ConstMapMat(cols->data(), patch, ncols);
    std::vector<double> out(n * o * plane);
    for (std::size_t ni = 0; ni < n; ++ni)
        for (std::size_t oi = 0; oi < o; ++oi)
            std::copy_n(prod.data() + oi * ncols + ni * plane, plane, out.data() + (ni * o + oi) * plane);
    return make_result({n, o, d.out_h, d.out_w}, std::move(out), {x, weight},
                       [x, weight, g, d, cols, n, c, h, w, o, patch, plane, ncols](const Tensor& r) {
                           RowMat go(o, ncols);
                           auto gr = r.grad();
                           for (std::size_t ni = 0; ni < n; ++ni)
                               for (std::size_t oi = 0; oi < o; ++oi)
                                   std::copy_n(gr.data() + (ni * o + oi) * plane, plane, go.data() + oi * ncols + ni * plane);
                           if (weight.requires_grad())
                               MapMat(weight.grad_mut().data(), o, patch).noalias() +=
                                   go * ConstMapMat(cols->data(), patch, ncols).transpose();
                           if (x.requires_grad()) {
                               RowMat dcols = ConstMapMat(weight.data().data(), o, patch).transpose() * go;
                               col2im(dcols.data(), n, c, h, w, g, d, x.grad_mut().data());
                           }
                       });
}

namespace {

template <typename Visit>
void for_each_window(std::size_t h, std::size_t w, const WindowGeometry& g, const WindowDims& d, std::size_t oy,
                     std::size_t ox, Visit visit) {
    for (std::size_t a = 0; a < g.k1; ++a) {
        const long iy = static_cast<long>(oy * g.s1 + a) - static_cast<long>(d.pad_top);
        if (iy < 0 || iy >= static_cast<long>(h)) continue;
        for (std::size_t b = 0; b < g.k2; ++b) {
            const long ix = static_cast<long>(ox * g.s2 + b) - static_cast<long>(d.pad_left);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            visit(static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix));
        }
    }
}

}  // namespace

Tensor norm_pool(const Tensor& x, const WindowGeometry& g) {
    require_rank("norm_pool", x, 4);
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const WindowDims d = window_dims(h, w, g);
    std::vector<double> out(n * c * d.out_h * d.out_w);
    auto in = x.data();
    for (std::size_t p = 0; p < n * c; ++p)
        for (std::size_t oy = 0; oy < d.out_h; ++oy)
            for (std::size_t ox = 0; ox < d.out_w; ++ox) {
                double ss = 0.0;
                for_each_window(h, w, g, d, oy, ox, [&](std::size_t idx) { ss += in[p * h * w + idx] * in[p * h * w + idx]; });
                out[(p * d.out_h + oy) * d.out_w + ox] = std::sqrt(ss);
            }
    return make_result({n, c, d.out_h, d.out_w}, std::move(out), {x}, [x, g, d, n, c, h, w](const Tensor& r) {
        if (!x.requires_grad()) return;
        auto gx = x.grad_mut();
        auto in = x.data();
        auto y = r.data();
        auto go = r.grad();
        for (std::size_t p = 0; p < n * c; ++p)
            for (std::size_t oy = 0; oy < d.out_h; ++oy)
                for (std::size_t ox = 0; ox < d.out_w; ++ox) {
                    const std::size_t o = (p * d.out_h + oy) * d.out_w + ox;
                    if (y[o] <= 0.0) continue;
                    const double k = go[o] / y[o];
                    for_each_window(h, w, g, d, oy, ox, [&](std::size_t idx) { gx[p * h * w + idx] += k * in[p * h * w + idx]; });
                }
    });
}

Tensor max_pool(const Tensor& x, const WindowGeometry& g) {
    require_rank("max_pool", x, 4);
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const WindowDims d = window_dims(h, w, g);
    const std::size_t count = n * c * d.out_h * d.out_w;
    std::vector<double> out(count);
    auto argmax = std::make_shared<std::vector<std::size_t>>(count);
    auto in = x.data();
    for (std::size_t p = 0; p < n * c; ++p)
        for (std::size_t oy = 0; oy < d.out_h; ++oy)
            for (std::size_t ox = 0; ox < d.out_w; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                std::size_t arg = 0;
                for_each_window(h, w, g, d, oy, ox, [&](std::size_t idx) {
                    if (in[p * h * w + idx] > best) {
                        best = in[p * h * w + idx];
                        arg = p * h * w + idx;
                    }
                });
                const std::size_t o = (p * d.out_h + oy) * d.out_w + ox;
                out[o] = best;
                (*argmax)[o] = arg;
            }
    return make_result({n, c, d.out_h, d.out_w}, std::move(out), {x}, [x, argmax](const Tensor& r) {
        if (!x.requires_grad()) return;
        auto gx = x.grad_mut();
        auto go = r.grad();
        for (std::size_t o = 0; o < go.size(); ++o) gx[(*argmax)[o]] += go[o];
    });
}

Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng) {
    if (rate <= 0.0) return x;
    std::bernoulli_distribution keep(1.0 - rate);
    auto mask = std::make_shared<std::vector<double>>(x.numel());
    const double k = 1.0 / (1.0 - rate);
    for (auto& m : *mask) m = keep(rng) ? k : 0.0;
    std::vector<double> out(x.numel());
    auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * (*mask)[i];
    return make_result(x.shape(), std::move(out), {x}, [x, mask](const Tensor& r) {
        if (!x.requires_grad()) return;
        auto g = x.grad_mut();
        auto go = r.grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go[i] * (*mask)[i];
    });
}

}  // namespace l2nnn::ops
