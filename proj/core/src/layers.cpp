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

#include "l2nnn/layers.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "l2nnn/weights.hpp"

namespace l2nnn {

std::string to_string(WeightMode mode) {
    switch (mode) {
        case WeightMode::rescale: return "rescale";
        case WeightMode::penalty: return "penalty";
        case WeightMode::unconstrained: return "unconstrained";
    }
    return "?";
}

WeightMode parse_weight_mode(std::string_view text) {
    if (text == "rescale") return WeightMode::rescale;
    if (text == "penalty") return WeightMode::penalty;
    if (text == "unconstrained") return WeightMode::unconstrained;
    throw std::invalid_argument("unknown weight mode '" + std::string(text) + "'");
}

// ---- Spec parsing ------------------------------------------------------

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

[[noreturn]] void bad_token(std::string_view token, const std::string& why) {
    throw std::invalid_argument("layer '" + std::string(token) + "': " + why);
}

std::size_t parse_count(std::string_view token, std::string_view field) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size() || v == 0)
        bad_token(token, "expected a positive integer, got '" + std::string(field) + "'");
    return v;
}

std::pair<std::size_t, std::size_t> parse_pair(std::string_view token, std::string_view field) {
    const auto parts = split(field, 'x');
    if (parts.size() == 1) {
        const auto v = parse_count(token, parts[0]);
        return {v, v};
    }
    if (parts.size() != 2) bad_token(token, "expected N or NxM, got '" + std::string(field) + "'");
    return {parse_count(token, parts[0]), parse_count(token, parts[1])};
}

std::string pair_text(std::size_t a, std::size_t b) {
    return a == b ? std::to_string(a) : std::to_string(a) + "x" + std::to_string(b);
}

Nonlinearity parse_fn(std::string_view token, std::string_view name) {
    if (name == "relu") return Nonlinearity::relu;
    if (name == "tanh") return Nonlinearity::tanh;
    if (name == "sigmoid") return Nonlinearity::sigmoid;
    if (name == "ssig") return Nonlinearity::scaled_sigmoid;
    bad_token(token, "unknown nonlinearity '" + std::string(name) + "'");
}

const char* fn_text(Nonlinearity fn) {
    switch (fn) {
        case Nonlinearity::relu: return "relu";
        case Nonlinearity::tanh: return "tanh";
        case Nonlinearity::sigmoid: return "sigmoid";
        case Nonlinearity::scaled_sigmoid: return "ssig";
    }
    return "?";
}

ops::Padding parse_padding(std::string_view token, std::string_view p) {
    if (p == "same") return ops::Padding::same;
    if (p == "valid") return ops::Padding::valid;
    bad_token(token, "padding must be same or valid");
}

std::string double_text(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

std::vector<LayerSpec> parse_layer_list(std::string_view text) {
    std::vector<LayerSpec> out;
    int depth = 0;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i < text.size() && text[i] == '[') ++depth;
        if (i < text.size() && text[i] == ']') --depth;
        if (depth < 0) throw std::invalid_argument("layer list: unbalanced ']'");
        if (i == text.size() || (text[i] == ',' && depth == 0)) {
            auto token = trim(text.substr(start, i - start));
            if (!token.empty()) out.push_back(LayerSpec::parse(token));
            start = i + 1;
        }
    }
    if (depth != 0) throw std::invalid_argument("layer list: unbalanced '['");
    return out;
}

std::string layer_list_to_string(const std::vector<LayerSpec>& layers) {
    std::string out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (i) out += ',';
        out += layers[i].to_string();
    }
    return out;
}

LayerSpec LayerSpec::parse(std::string_view token) {
    token = trim(token);
    LayerSpec s;
    if (token.starts_with("res[") || token.starts_with("resx[")) {
        if (!token.ends_with("]")) bad_token(token, "missing ']'");
        s.kind = LayerKind::residual;
        s.shared_split = token.starts_with("res[");
        const auto open = token.find('[');
        s.branch = parse_layer_list(token.substr(open + 1, token.size() - open - 2));
        if (s.branch.empty()) bad_token(token, "empty residual branch");
        return s;
    }
    const auto f = split(token, ':');
    const auto& name = f[0];
    auto want = [&](std::size_t lo, std::size_t hi) {
        if (f.size() < lo || f.size() > hi) bad_token(token, "wrong number of fields");
    };
    if (name == "conv") {
        want(4, 5);
        s.kind = LayerKind::conv;
        s.units = parse_count(token, f[1]);
        std::tie(s.window.k1, s.window.k2) = parse_pair(token, f[2]);
        std::tie(s.window.s1, s.window.s2) = parse_pair(token, f[3]);
        s.window.padding = f.size() == 5 ? parse_padding(token, f[4]) : ops::Padding::same;
    } else if (name == "linear") {
        want(2, 2);
        s.kind = LayerKind::linear;
        s.units = parse_count(token, f[1]);
    } else if (name == "heads") {
        want(2, 3);
        s.kind = LayerKind::heads;
        s.units = parse_count(token, f[1]);
        if (f.size() == 3) {
            if (f[2] == "multi") s.head = HeadKind::multi;
            else if (f[2] == "single") s.head = HeadKind::single;
            else bad_token(token, "head kind must be multi or single");
        }
    } else if (name == "tsrelu") {
        want(1, 1);
        s.kind = LayerKind::two_sided_relu;
    } else if (name == "lift") {
        want(2, 2);
        s.kind = LayerKind::lift;
        s.fn = parse_fn(token, f[1]);
    } else if (name == "act") {
        want(2, 2);
        s.kind = LayerKind::activation;
        s.fn = parse_fn(token, f[1]);
    } else if (name == "relu") {
        want(1, 1);
        s.kind = LayerKind::activation;
        s.fn = Nonlinearity::relu;
    } else if (name == "normpool" || name == "maxpool") {
        want(3, 4);
        s.kind = name == "normpool" ? LayerKind::norm_pool : LayerKind::max_pool;
        std::tie(s.window.k1, s.window.k2) = parse_pair(token, f[1]);
        std::tie(s.window.s1, s.window.s2) = parse_pair(token, f[2]);
        s.window.padding = f.size() == 4 ? parse_padding(token, f[3]) : ops::Padding::same;
    } else if (name == "flatten") {
        want(1, 1);
        s.kind = LayerKind::flatten;
    } else if (name == "center") {
        want(2, 3);
        s.kind = LayerKind::mean_center;
        if (f[1] == "features") s.axes = CenterAxes::features;
        else if (f[1] == "spatial") s.axes = CenterAxes::spatial;
        else bad_token(token, "axes must be features or spatial");
        if (f.size() == 3) {
            if (f[2] != "scale") bad_token(token, "expected 'scale'");
            s.learned_scale = true;
        }
    } else if (name == "dropout") {
        want(2, 2);
        s.kind = LayerKind::dropout;
        double r = 0.0;
        auto [ptr, ec] = std::from_chars(f[1].data(), f[1].data() + f[1].size(), r);
        if (ec != std::errc() || ptr != f[1].data() + f[1].size() || r < 0.0 || r >= 1.0)
            bad_token(token, "dropout rate must lie in [0, 1)");
        s.rate = r;
    } else {
        bad_token(token, "unknown layer kind");
    }
    return s;
}

std::string LayerSpec::to_string() const {
    auto geom = [&](const char* name) {
        return std::string(name) + ":" + pair_text(window.k1, window.k2) + ":" + pair_text(window.s1, window.s2) + ":" +
               (window.padding == ops::Padding::same ? "same" : "valid");
    };
    switch (kind) {
        case LayerKind::conv:
            return "conv:" + std::to_string(units) + ":" + pair_text(window.k1, window.k2) + ":" +
                   pair_text(window.s1, window.s2) + ":" + (window.padding == ops::Padding::same ? "same" : "valid");
        case LayerKind::linear: return "linear:" + std::to_string(units);
        case LayerKind::heads:
            return "heads:" + std::to_string(units) + (head == HeadKind::multi ? ":multi" : ":single");
        case LayerKind::two_sided_relu: return "tsrelu";
        case LayerKind::lift: return std::string("lift:") + fn_text(fn);
        case LayerKind::activation: return std::string("act:") + fn_text(fn);
        case LayerKind::norm_pool: return geom("normpool");
        case LayerKind::max_pool: return geom("maxpool");
        case LayerKind::flatten: return "flatten";
        case LayerKind::mean_center:
            return std::string("center:") + (axes == CenterAxes::features ? "features" : "spatial") +
                   (learned_scale ? ":scale" : "");
        case LayerKind::residual:
            return std::string(shared_split ? "res[" : "resx[") + layer_list_to_string(branch) + "]";
        case LayerKind::dropout: return "dropout:" + double_text(rate);
    }
    return "?";
}

// ---- Free-standing operations -----------------------------------------

double overlap_scale(const ops::WindowGeometry& g) {
    const std::size_t a = (g.k1 + g.s1 - 1) / g.s1;
    const std::size_t b = (g.k2 + g.s2 - 1) / g.s2;
    return 1.0 / std::sqrt(static_cast<double>(a * b));
}

Tensor effective_weight(const Tensor& weight, WeightMode mode, bool per_row, bool stop_bound_grad) {
    if (mode != WeightMode::rescale) return weight;
    if (!per_row) return normalize_weight(weight, stop_bound_grad);
    std::vector<Tensor> rows;
    rows.reserve(weight.dim(0));
    for (std::size_t k = 0; k < weight.dim(0); ++k)
        rows.push_back(normalize_weight(ops::row(weight, k), stop_bound_grad));
    return ops::stack_rows(rows);
}

Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, WeightMode mode, bool stop_bound_grad) {
    return ops::add_bias(ops::linear(x, effective_weight(weight, mode, false, stop_bound_grad)), bias);
}

Tensor conv_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, const ops::WindowGeometry& g,
                    WeightMode mode, bool stop_bound_grad) {
    Tensor in = x;
    if (mode != WeightMode::unconstrained) {
        const double k = overlap_scale(g);
        if (k != 1.0) in = ops::scale(x, k);
    }
    return ops::add_bias(ops::conv2d(in, effective_weight(weight, mode, false, stop_bound_grad), g), bias);
}

Tensor two_sided_relu(const Tensor& x) { return ops::concat(ops::relu(x), ops::relu(ops::neg(x))); }

Tensor scaled_sigmoid(const Tensor& x, const Tensor& log_t) {
    if (x.rank() < 2 || log_t.rank() != 1 || log_t.dim(0) != x.dim(1)) {
        throw ShapeError("scaled_sigmoid: per-channel t " + shape_to_string(log_t.shape()) + " does not match " +
                         shape_to_string(x.shape()));
    }
    const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
    std::vector<double> t(c);
    for (std::size_t j = 0; j < c; ++j) t[j] = std::exp(log_t.data()[j]);
    std::vector<double> out(x.numel());
    auto in = x.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j)
            for (std::size_t k = 0; k < inner; ++k) {
                const std::size_t idx = (i * c + j) * inner + k;
                out[idx] = t[j] / (1.0 + std::exp(-4.0 * in[idx] / t[j]));
            }
    return make_result(x.shape(), std::move(out), {x, log_t}, [x, log_t, t, n, c, inner](const Tensor& r) {
        auto in = x.data();
        auto go = r.grad();
        std::vector<double> dt(c, 0.0);
        std::span<double> gx = x.requires_grad() ? x.grad_mut() : std::span<double>{};
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j)
                for (std::size_t k = 0; k < inner; ++k) {
                    const std::size_t idx = (i * c + j) * inner + k;
                    const double u = 4.0 * in[idx] / t[j];
                    const double s = 1.0 / (1.0 + std::exp(-u));
                    if (!gx.empty()) gx[idx] += go[idx] * 4.0 * s * (1.0 - s);
                    dt[j] += go[idx] * (s - u * s * (1.0 - s));
                }
        if (log_t.requires_grad()) {
            auto gl = log_t.grad_mut();
            for (std::size_t j = 0; j < c; ++j) gl[j] += dt[j] * t[j];
        }
    });
}

Tensor apply_nonlinearity(const Tensor& x, Nonlinearity fn, const Tensor& log_t) {
    switch (fn) {
        case Nonlinearity::relu: return ops::relu(x);
        case Nonlinearity::tanh: return ops::tanh(x);
        case Nonlinearity::sigmoid: return ops::sigmoid(x);
        case Nonlinearity::scaled_sigmoid: return scaled_sigmoid(x, log_t);
    }
    return x;
}

Tensor two_sided_lift(const Tensor& x, Nonlinearity fn, const Tensor& log_t) {
    const Tensor fx = apply_nonlinearity(x, fn, log_t);
    return ops::concat(fx, ops::sub(fx, x));
}

Tensor norm_pool_forward(const Tensor& x, const ops::WindowGeometry& g, bool scale_overlap) {
    const double k = overlap_scale(g);
    return ops::norm_pool(scale_overlap && k != 1.0 ? ops::scale(x, k) : x, g);
}

Tensor split_fraction(const Tensor& raw) { return ops::clamp(raw, 0.0, 1.0); }

SplitPair split_copy(const Tensor& x, const Tensor& t) {
    return {ops::mul_scalar(x, t), ops::mul_scalar(x, ops::complement(t))};
}

Tensor reconverge_add(const Tensor& x1, const Tensor& fx2, const Tensor& t) {
    if (x1.rank() != fx2.rank() || x1.dim(0) != fx2.dim(0) || fx2.dim(1) > x1.dim(1)) {
        throw ShapeError("reconverge_add: branch " + shape_to_string(fx2.shape()) + " cannot merge into " +
                         shape_to_string(x1.shape()));
    }
    for (std::size_t ax = 2; ax < x1.rank(); ++ax)
        if (x1.dim(ax) != fx2.dim(ax))
            throw ShapeError("reconverge_add: branch " + shape_to_string(fx2.shape()) + " cannot merge into " +
                             shape_to_string(x1.shape()));
    const std::size_t agg = fx2.dim(1);
    const Tensor head = agg == x1.dim(1) ? x1 : ops::slice_channels(x1, 0, agg);
    const Tensor mixed = ops::add(ops::mul_scalar(head, t), ops::mul_scalar(fx2, ops::complement(t)));
    if (agg == x1.dim(1)) return mixed;
    return ops::concat(mixed, ops::slice_channels(x1, agg, x1.dim(1)));
}

Tensor mean_center(const Tensor& x, CenterAxes axes, const Tensor& scale) {
    if (x.rank() < 2) throw ShapeError("mean_center: need a batch axis, got " + shape_to_string(x.shape()));
    const std::size_t n = x.dim(0), c = x.dim(1), inner = x.numel() / (n * c);
    // Groups share one mean: a whole sample, or one channel plane.
    const std::size_t group = axes == CenterAxes::features ? c * inner : inner;
    const std::size_t groups = x.numel() / group;
    std::vector<double> out(x.data().begin(), x.data().end());
    for (std::size_t gi = 0; gi < groups; ++gi) {
        double m = 0.0;
        for (std::size_t k = 0; k < group; ++k) m += out[gi * group + k];
        m /= static_cast<double>(group);
        for (std::size_t k = 0; k < group; ++k) out[gi * group + k] -= m;
    }
    Tensor centered = make_result(x.shape(), std::move(out), {x}, [x, group, groups](const Tensor& r) {
        if (!x.requires_grad()) return;
        auto g = x.grad_mut();
        auto go = r.grad();
        for (std::size_t gi = 0; gi < groups; ++gi) {
            double m = 0.0;
            for (std::size_t k = 0; k < group; ++k) m += go[gi * group + k];
            m /= static_cast<double>(group);
            for (std::size_t k = 0; k < group; ++k) g[gi * group + k] += go[gi * group + k] - m;
        }
    });
    if (!scale.defined()) return centered;
    if (scale.rank() != 1 || scale.dim(0) != c) {
        throw ShapeError("mean_center: scale " + shape_to_string(scale.shape()) + " does not match " +
                         shape_to_string(x.shape()));
    }
    // Multipliers scale / max|scale|, all within [-1, 1].
    auto sv = scale.data();
    std::size_t arg = 0;
    for (std::size_t j = 1; j < c; ++j)
        if (std::abs(sv[j]) > std::abs(sv[arg])) arg = j;
    const double peak = std::abs(sv[arg]);
    if (peak == 0.0) return ops::scale(centered, 0.0);
    std::vector<double> mult(c);
    for (std::size_t j = 0; j < c; ++j) mult[j] = sv[j] / peak;
    std::vector<double> res(centered.numel());
    auto cv = centered.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j)
            for (std::size_t k = 0; k < inner; ++k) res[(i * c + j) * inner + k] = cv[(i * c + j) * inner + k] * mult[j];
    return make_result(x.shape(), std::move(res), {centered, scale},
                       [centered, scale, mult, arg, peak, n, c, inner](const Tensor& r) {
                           auto go = r.grad();
                           auto cv = centered.data();
                           std::vector<double> dm(c, 0.0);
                           for (std::size_t i = 0; i < n; ++i)
                               for (std::size_t j = 0; j < c; ++j)
                                   for (std::size_t k = 0; k < inner; ++k) {
                                       const std::size_t idx = (i * c + j) * inner + k;
                                       dm[j] += go[idx] * cv[idx];
                                   }
                           if (centered.requires_grad()) {
                               auto g = centered.grad_mut();
                               for (std::size_t i = 0; i < n; ++i)
                                   for (std::size_t j = 0; j < c; ++j)
                                       for (std::size_t k = 0; k < inner; ++k) {
                                           const std::size_t idx = (i * c + j) * inner + k;
                                           g[idx] += go[idx] * mult[j];
                                       }
                           }
                           if (scale.requires_grad()) {
                               // mult_j = s_j / |s_arg|
                               auto gs = scale.grad_mut();
                               const double sgn = scale.data()[arg] > 0.0 ? 1.0 : -1.0;
                               double cross = 0.0;
                               for (std::size_t j = 0; j < c; ++j) {
                                   gs[j] += dm[j] / peak;
                                   cross += dm[j] * mult[j];
                               }
                               gs[arg] -= cross * sgn / peak;
                           }
                       });
}

// ---- Layer objects ------------------------------------------------------

namespace {

Tensor gaussian(Shape shape, double stddev, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (auto& v : t.data()) v = dist(rng);
    t.set_requires_grad(true);
    return t;
}

Tensor trainable(Shape shape, double value) {
    Tensor t = Tensor::full(std::move(shape), value);
    t.set_requires_grad(true);
    return t;
}

class SpecLayer : public Layer {
public:
    SpecLayer(LayerSpec spec, Shape out) : spec_(std::move(spec)), out_(std::move(out)) {}
    const Shape& output_shape() const override { return out_; }
    const LayerSpec& spec() const override { return spec_; }

protected:
    LayerSpec spec_;
    Shape out_;
};

// Shared by conv, linear and heads: owns W and bias, caches the effective
// matrix for evaluation.
class WeightedLayer : public SpecLayer {
public:
    WeightedLayer(LayerSpec spec, Shape out, Tensor weight, Tensor bias, bool per_row)
        : SpecLayer(std::move(spec), std::move(out)), weight_(std::move(weight)), bias_(std::move(bias)), per_row_(per_row) {}

    void collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) const override {
        out.push_back({prefix + "weight", weight_});
        out.push_back({prefix + "bias", bias_});
    }

    void collect_penalties(std::vector<Tensor>& out) const override {
        if (!per_row_) {
            out.push_back(weight_penalty(weight_));
            return;
        }
        for (std::size_t k = 0; k < weight_.dim(0); ++k) out.push_back(weight_penalty(ops::row(weight_, k)));
    }

    void invalidate() const override { cached_ = Tensor(); }

protected:
    Tensor matrix(const ForwardContext& ctx) const {
        if (ctx.phase == Phase::train) return effective_weight(weight_, ctx.mode, per_row_, ctx.stop_bound_grad);
        if (!cached_.defined() || cached_mode_ != ctx.mode) {
            NoGradGuard no_grad;
            cached_ = effective_weight(weight_, ctx.mode, per_row_).detach();
            cached_mode_ = ctx.mode;
        }
        return cached_;
    }

    Tensor weight_;
    Tensor bias_;
    bool per_row_;
    mutable Tensor cached_;
    mutable WeightMode cached_mode_ = WeightMode::rescale;
};

class ConvLayer final : public WeightedLayer {
public:
    using WeightedLayer::WeightedLayer;
    Tensor forward(const Tensor& x, const ForwardContext& ctx) const override {
        Tensor in = x;
        if (ctx.mode != WeightMode::unconstrained) {
            const double k = overlap_scale(spec_.window);
            if (k != 1.0) in = ops::scale(x, k);
        }
        return ops::add_bias(ops::conv2d(in, matrix(ctx), spec_.window), bias_);
    }
};

class DenseLayer final : public WeightedLayer {
public:
    using WeightedLayer::WeightedLayer;
    Tensor forward(const Tensor& x, const ForwardContext& ctx) const override {
        return ops::add_bias(ops::linear(x, matrix(ctx)), bias_);
    }
};

class TwoSidedReluLayer final : public SpecLayer {
public:
    using SpecLayer::SpecLayer;
    Tensor forward(const Tensor& x, const ForwardContext&) const override { return two_sided_relu(x); }
};

class NonlinearLayer final : public SpecLayer {
public:
    NonlinearLayer(LayerSpec spec, Shape out, std::size_t channels) : SpecLayer(std::move(spec), std::move(out)) {
        if (spec_.fn == Nonlinearity::scaled_sigmoid) log_t_ = trainable({channels}, 0.0);
    }
    Tensor forward(const Tensor& x, const ForwardContext&) const override {
        return spec_.kind == LayerKind::lift ? two_sided_lift(x, spec_.fn, log_t_) : apply_nonlinearity(x, spec_.fn, log_t_);
    }
    void collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) const override {
        if (log_t_.defined()) out.push_back({prefix + "log_t", log_t_});
    }

private:
    Tensor log_t_;
};

class PoolLayer final : public SpecLayer {
public:
    using SpecLayer::SpecLayer;
    Tensor forward(const Tensor& x, const ForwardContext& ctx) const override {
        const bool scale = ctx.mode != WeightMode::unconstrained;
        if (spec_.kind == LayerKind::norm_pool) return norm_pool_forward(x, spec_.window, scale);
        const double k = overlap_scale(spec_.window);
        return ops::max_pool(scale && k != 1.0 ? ops::scale(x, k) : x, spec_.window);
    }
};

class FlattenLayer final : public SpecLayer {
public:
    using SpecLayer::SpecLayer;
    Tensor forward(const Tensor& x, const ForwardContext&) const override {
        return ops::reshape(x, {x.dim(0), x.numel() / x.dim(0)});
    }
};

class CenterLayer final : public SpecLayer {
public:
    CenterLayer(LayerSpec spec, Shape out, std::size_t channels) : SpecLayer(std::move(spec), std::move(out)) {
        if (spec_.learned_scale) scale_ = trainable({channels}, 1.0);
    }
    Tensor forward(const Tensor& x, const ForwardContext&) const override { return mean_center(x, spec_.axes, scale_); }
    void collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) const override {
        if (scale_.defined()) out.push_back({prefix + "scale", scale_});
    }

private:
    Tensor scale_;
};

class DropoutLayer final : public SpecLayer {
public:
    using SpecLayer::SpecLayer;
    Tensor forward(const Tensor& x, const ForwardContext& ctx) const override {
        if (ctx.phase != Phase::train || !ctx.rng) return x;
        return ops::dropout(x, spec_.rate, *ctx.rng);
    }
};

class ResidualLayer final : public SpecLayer {
public:
    ResidualLayer(LayerSpec spec, const Shape& in, std::mt19937_64& rng) : SpecLayer(std::move(spec), in) {
        Shape shape = in;
        for (const auto& s : spec_.branch) {
            branch_.push_back(make_layer(s, shape, rng));
            shape = branch_.back()->output_shape();
        }
        if (shape.size() != in.size() || shape.empty() || shape[0] > in[0] ||
            !std::equal(shape.begin() + 1, shape.end(), in.begin() + 1)) {
            throw ShapeError("residual: branch maps " + shape_to_string(in) + " to " + shape_to_string(shape) +
                             ", which cannot reconverge");
        }
        split_ = trainable({1}, std::sqrt(0.5));
        if (!spec_.shared_split) merge_ = trainable({1}, std::sqrt(0.5));
    }

    Tensor forward(const Tensor& x, const ForwardContext& ctx) const override {
        const Tensor t = split_fraction(split_);
        auto [x1, x2] = split_copy(x, t);
        Tensor fx = x2;
        for (const auto& layer : branch_) fx = layer->forward(fx, ctx);
        return reconverge_add(x1, fx, merge_.defined() ? split_fraction(merge_) : t);
    }

    void collect_parameters(const std::string& prefix, std::vector<NamedParam>& out) const override {
        out.push_back({prefix + "split", split_});
        if (merge_.defined()) out.push_back({prefix + "merge", merge_});
        for (std::size_t i = 0; i < branch_.size(); ++i)
            branch_[i]->collect_parameters(prefix + "branch" + std::to_string(i) + ".", out);
    }
    void collect_penalties(std::vector<Tensor>& out) const override {
        for (const auto& l : branch_) l->collect_penalties(out);
    }
    void invalidate() const override {
        for (const auto& l : branch_) l->invalidate();
    }

private:
    std::vector<std::unique_ptr<Layer>> branch_;
    Tensor split_;
    Tensor merge_;
};

std::size_t channels_of(const Shape& in) { return in.empty() ? 1 : in[0]; }

}  // namespace

std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& in, std::mt19937_64& rng) {
    switch (spec.kind) {
        case LayerKind::conv: {
            if (in.size() != 3) throw ShapeError("conv: needs CxHxW input, got " + shape_to_string(in));
            const auto d = ops::window_dims(in[1], in[2], spec.window);
            const std::size_t fan_in = in[0] * spec.window.k1 * spec.window.k2;
            return std::make_unique<ConvLayer>(spec, Shape{spec.units, d.out_h, d.out_w},
                                               gaussian({spec.units, fan_in}, std::sqrt(2.0 / fan_in), rng),
                                               trainable({spec.units}, 0.0), false);
        }
        case LayerKind::linear:
        case LayerKind::heads: {
            if (in.size() != 1) throw ShapeError(spec.to_string() + ": needs a flat input, got " + shape_to_string(in));
            const bool per_row = spec.kind == LayerKind::heads && spec.head == HeadKind::multi;
            return std::make_unique<DenseLayer>(spec, Shape{spec.units},
                                                gaussian({spec.units, in[0]}, std::sqrt(2.0 / in[0]), rng),
                                                trainable({spec.units}, 0.0), per_row);
        }
        case LayerKind::two_sided_relu: {
            Shape out = in;
            out.at(0) *= 2;
            return std::make_unique<TwoSidedReluLayer>(spec, out);
        }
        case LayerKind::lift: {
            Shape out = in;
            out.at(0) *= 2;
            return std::make_unique<NonlinearLayer>(spec, out, channels_of(in));
        }
        case LayerKind::activation: return std::make_unique<NonlinearLayer>(spec, in, channels_of(in));
        case LayerKind::norm_pool:
        case LayerKind::max_pool: {
            if (in.size() != 3) throw ShapeError("pool: needs CxHxW input, got " + shape_to_string(in));
            const auto d = ops::window_dims(in[1], in[2], spec.window);
            return std::make_unique<PoolLayer>(spec, Shape{in[0], d.out_h, d.out_w});
        }
        case LayerKind::flatten: return std::make_unique<FlattenLayer>(spec, Shape{shape_numel(in)});
        case LayerKind::mean_center: return std::make_unique<CenterLayer>(spec, in, channels_of(in));
        case LayerKind::residual: return std::make_unique<ResidualLayer>(spec, in, rng);
        case LayerKind::dropout: return std::make_unique<DropoutLayer>(spec, in);
    }
    throw std::invalid_argument("make_layer: unknown kind");
}

}  // namespace l2nnn
