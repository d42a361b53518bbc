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
#include <random>

#include "l2nnn/tensor.hpp"

// Differentiable primitives. Every op records onto the active tape when one
// of its operands requires grad. Apart from add_bias there is no implicit
// broadcasting: operand shapes must match exactly.
namespace l2nnn::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
/// a * s where s is a one-element tensor (e.g. a trainable scalar).
Tensor mul_scalar(const Tensor& a, const Tensor& s);
Tensor add_scalar(const Tensor& a, double value);

/// [m x k] * [k x n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// [m x n] -> [n x m]
Tensor transpose(const Tensor& a);
/// x [N x in] times W^T for W [out x in].
Tensor linear(const Tensor& x, const Tensor& weight);
/// Adds b [C] along axis 1 of x [N x C x ...].
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Concatenates along axis 1; all other extents must agree.
Tensor concat(const Tensor& a, const Tensor& b);
/// Channels [begin, end) along axis 1.
Tensor slice_channels(const Tensor& a, std::size_t begin, std::size_t end);
/// Row k of a rank-2 tensor, as a [1 x n] tensor.
Tensor row(const Tensor& a, std::size_t k);
/// Stacks [1 x n] rows into [m x n].
Tensor stack_rows(const std::vector<Tensor>& rows);

/// Subgradient at the kink is 0.
Tensor relu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
/// Gradient passes where lo <= a <= hi.
Tensor clamp(const Tensor& a, double lo, double hi);
/// sqrt(max(1 - a^2, 0)); gradient is taken as 0 where the argument is 0.
Tensor complement(const Tensor& a);

enum class Padding { valid, same };

struct WindowGeometry {
    std::size_t k1 = 1, k2 = 1;
    std::size_t s1 = 1, s2 = 1;
    Padding padding = Padding::valid;
    bool operator==(const WindowGeometry&) const = default;
};

struct WindowDims {
    std::size_t out_h, out_w;
    std::size_t pad_top, pad_left;
};

/// Output extent and leading zero padding for a sliding window over an HxW
/// plane. `same` tiles ceil(H/S) windows; `valid` requires H >= K.
WindowDims window_dims(std::size_t h, std::size_t w, const WindowGeometry& g);

/// x [N x C x H x W], weight [O x C*k1*k2] (flattened filters) -> [N x O x Ho x Wo].
Tensor conv2d(const Tensor& x, const Tensor& weight, const WindowGeometry& g);
/// L2 norm of each window, per channel. Zero windows get subgradient 0.
Tensor norm_pool(const Tensor& x, const WindowGeometry& g);
Tensor max_pool(const Tensor& x, const WindowGeometry& g);

/// Inverted dropout; identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

}  // namespace l2nnn::ops
