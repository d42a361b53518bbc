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

#include <memory>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "l2nnn/ops.hpp"
#include "l2nnn/tensor.hpp"

namespace l2nnn {

/// How linear and convolution weights are kept nonexpansive.
///  - rescale: forward uses W / sqrt(b(W)), strictly nonexpansive.
///  - penalty: forward uses W; a hinge on b(W) is added to the loss.
///  - unconstrained: ordinary network, no scaling anywhere.
enum class WeightMode { rescale, penalty, unconstrained };

enum class Phase { train, eval };

std::string to_string(WeightMode mode);
WeightMode parse_weight_mode(std::string_view text);

struct ForwardContext {
    WeightMode mode = WeightMode::rescale;
    Phase phase = Phase::eval;
    std::mt19937_64* rng = nullptr;  // dropout only
    bool stop_bound_grad = false;
};

enum class LayerKind {
    conv,
    linear,
    heads,
    two_sided_relu,
    lift,
    activation,
    norm_pool,
    max_pool,
    flatten,
    mean_center,
    residual,
    dropout,
};

enum class Nonlinearity { relu, tanh, sigmoid, scaled_sigmoid };
enum class HeadKind { multi, single };
enum class CenterAxes { features, spatial };

/// Declarative description of one layer. Serialized as a compact token, e.g.
/// `conv:16:3:2:same`, `tsrelu`, `normpool:2:2`, `heads:10:multi`,
/// `res[conv:8:3:1:same,tsrelu,conv:8:3:1:same]`.
struct LayerSpec {
    LayerKind kind = LayerKind::flatten;
    std::size_t units = 0;
    ops::WindowGeometry window{};
    Nonlinearity fn = Nonlinearity::relu;
    HeadKind head = HeadKind::multi;
    CenterAxes axes = CenterAxes::features;
    bool learned_scale = false;
    bool shared_split = true;
    double rate = 0.0;
    std::vector<LayerSpec> branch;

    std::string to_string() const;
    static LayerSpec parse(std::string_view token);
    bool operator==(const LayerSpec&) const = default;
};

/// Splits a comma-separated layer list, respecting `[...]` nesting.
std::vector<LayerSpec> parse_layer_list(std::string_view text);
std::string layer_list_to_string(const std::vector<LayerSpec>& layers);

struct NamedParam {
    std::string name;
    Tensor tensor;
};

/// 1/sqrt(ceil(k1/s1) * ceil(k2/s2)): the factor that makes patch copying
/// nonexpansive when windows overlap.
double overlap_scale(const ops::WindowGeometry& g);

// ---- Free-standing layer operations -----------------------------------

/// y = W'x + bias with W' chosen by `mode`.
Tensor linear_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, WeightMode mode,
                      bool stop_bound_grad = false);
/// Scaled copy, patch extraction, then multiplication by the flattened weight.
Tensor conv_forward(const Tensor& x, const Tensor& weight, const Tensor& bias, const ops::WindowGeometry& g,
                    WeightMode mode, bool stop_bound_grad = false);
/// Effective matrix for `mode`; in rescale mode W / sqrt(b(W)), per row when
/// `per_row` is set (K single-output filters).
Tensor effective_weight(const Tensor& weight, WeightMode mode, bool per_row, bool stop_bound_grad = false);

/// (max(x,0), max(-x,0)) concatenated along axis 1, positive branch first.
Tensor two_sided_relu(const Tensor& x);
/// (f(x), f(x) - x) along axis 1. `log_t` is only read for scaled_sigmoid.
Tensor two_sided_lift(const Tensor& x, Nonlinearity fn, const Tensor& log_t = {});
/// t * sigmoid(4x / t) with t = exp(log_t[c]) per channel (axis 1).
Tensor scaled_sigmoid(const Tensor& x, const Tensor& log_t);
Tensor apply_nonlinearity(const Tensor& x, Nonlinearity fn, const Tensor& log_t = {});
/// Norm pooling with the input pre-scaled by 1/sqrt(K) for overlapping windows.
Tensor norm_pool_forward(const Tensor& x, const ops::WindowGeometry& g, bool scale_overlap = true);

/// t = clamp(raw, 0, 1).
Tensor split_fraction(const Tensor& raw);
struct SplitPair {
    Tensor first;   // t * x
    Tensor second;  // sqrt(1 - t^2) * x
};
SplitPair split_copy(const Tensor& x, const Tensor& t);
/// t * x1 + sqrt(1 - t^2) * fx2 on the first channels(fx2) channels of x1;
/// the remaining channels of x1 pass through unscaled.
Tensor reconverge_add(const Tensor& x1, const Tensor& fx2, const Tensor& t);
/// Subtracts the mean over the declared axes; with `scale` (one per channel)
/// multiplies by scale / max|scale| so every multiplier lies in [-1, 1].
Tensor mean_center(const Tensor& x, CenterAxes axes, const Tensor& scale = {});

// ---- Layer objects ------------------------------------------------------

class Layer {
public:
    virtual ~Layer() = default;

    virtual Tensor forward(const Tensor& x, const ForwardContext& ctx) const = 0;
    /// Output shape without the batch axis.
    virtual const Shape& output_shape() const = 0;
    virtual const LayerSpec& spec() const = 0;
    virtual void collect_parameters(const std::string&, std::vector<NamedParam>&) const {}
    /// Per-layer weight penalty terms for penalty mode.
    virtual void collect_penalties(std::vector<Tensor>&) const {}
    /// Drops cached effective weights after a parameter update.
    virtual void invalidate() const {}
};

/// Builds one layer for an input of shape `in` (no batch axis).
std::unique_ptr<Layer> make_layer(const LayerSpec& spec, const Shape& in, std::mt19937_64& rng);

}  // namespace l2nnn
