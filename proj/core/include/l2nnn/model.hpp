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
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "l2nnn/layers.hpp"

namespace l2nnn {

/// Full network description. Canonical text form:
///   input=1x28x28;weights=rescale;conv:16:3:2:same,tsrelu,...,heads:10:multi
/// The `weights=` segment is optional on input and defaults to rescale.
struct ArchSpec {
    Shape input;
    WeightMode mode = WeightMode::rescale;
    std::vector<LayerSpec> layers;

    std::string to_string() const;
    static ArchSpec parse(std::string_view text);
    bool operator==(const ArchSpec&) const = default;
};

/// The desk-scale default: two strided convolutions, norm pooling, one hidden
/// dense layer and ten per-class heads.
ArchSpec default_arch();

enum class CertMode { single_l2nnn, multi_l2nnn };
std::string to_string(CertMode mode);

class Model {
public:
    Model(ArchSpec arch, std::uint64_t seed);

    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;

    const ArchSpec& arch() const { return arch_; }
    WeightMode mode() const { return arch_.mode; }
    /// Logit count.
    std::size_t num_classes() const { return num_classes_; }
    /// multi_l2nnn iff the last layer is `heads:K:multi`.
    CertMode cert_mode() const;

    /// Context for inference in the deployed weight mode.
    ForwardContext eval_context() const { return ForwardContext{arch_.mode, Phase::eval, nullptr, false}; }

    /// x is [N x input...]; returns [N x K].
    Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
    /// Every intermediate activation, starting with x itself.
    std::vector<Tensor> forward_trace(const Tensor& x, const ForwardContext& ctx) const;
    /// Untaped inference in the deployed mode.
    Tensor logits(const Tensor& x) const;

    std::vector<NamedParam> parameters() const;
    /// Sum of all layer penalties; a constant zero when nothing is violated.
    Tensor weight_penalty() const;
    /// Must be called after parameters change in place.
    void invalidate() const;

    std::size_t num_layers() const { return layers_.size(); }
    const Layer& layer(std::size_t i) const { return *layers_.at(i); }

private:
    ArchSpec arch_;
    std::vector<std::unique_ptr<Layer>> layers_;
    std::size_t num_classes_ = 0;
};

/// argmax with ties resolved toward the lower index.
std::size_t argmax(std::span<const double> v);

}  // namespace l2nnn
