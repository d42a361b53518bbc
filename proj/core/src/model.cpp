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

#include "l2nnn/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <stdexcept>

#include "l2nnn/ops.hpp"
#include "l2nnn/weights.hpp"

namespace l2nnn {

namespace {

Shape parse_shape(std::string_view text) {
    Shape out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= text.size(); ++i) {
        if (i == text.size() || text[i] == 'x') {
            std::size_t v = 0;
            const auto field = text.substr(start, i - start);
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (ec != std::errc() || ptr != field.data() + field.size() || v == 0)
                throw std::invalid_argument("arch: bad input shape '" + std::string(text) + "'");
            out.push_back(v);
            start = i + 1;
        }
    }
    return out;
}

}  // namespace

std::string ArchSpec::to_string() const {
    std::string dims;
    for (std::size_t i = 0; i < input.size(); ++i) dims += (i ? "x" : "") + std::to_string(input[i]);
    return "input=" + dims + ";weights=" + l2nnn::to_string(mode) + ";" + layer_list_to_string(layers);
}

ArchSpec ArchSpec::parse(std::string_view text) {
    ArchSpec a;
    auto next = [&]() {
        const auto pos = text.find(';');
        auto seg = text.substr(0, pos);
        text = pos == std::string_view::npos ? std::string_view{} : text.substr(pos + 1);
        return seg;
    };
    auto seg = next();
    if (!seg.starts_with("input=")) throw std::invalid_argument("arch: must start with input=<shape>");
    a.input = parse_shape(seg.substr(6));
    if (text.starts_with("weights=")) a.mode = parse_weight_mode(next().substr(8));
    if (text.find(';') != std::string_view::npos) throw std::invalid_argument("arch: unexpected ';' in layer list");
    a.layers = parse_layer_list(text);
    return a;
}

ArchSpec default_arch() {
    return ArchSpec::parse(
        "input=1x28x28;conv:16:3:2:same,tsrelu,conv:32:3:2:same,tsrelu,normpool:2:2:same,flatten,linear:128,tsrelu,"
        "heads:10:multi");
}

std::string to_string(CertMode mode) { return mode == CertMode::multi_l2nnn ? "multi" : "single"; }

std::size_t argmax(std::span<const double> v) {
    return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

Model::Model(ArchSpec arch, std::uint64_t seed) : arch_(std::move(arch)) {
    if (arch_.input.empty()) throw std::invalid_argument("model: empty input shape");
    std::mt19937_64 rng(seed);
    Shape shape = arch_.input;
    for (const auto& spec : arch_.layers) {
        layers_.push_back(make_layer(spec, shape, rng));
        shape = layers_.back()->output_shape();
    }
    num_classes_ = shape_numel(shape);
    // Constrained models start nonexpansive so the penalty phase does not
    // open with a huge hinge gradient.
    if (arch_.mode != WeightMode::unconstrained) {
        for (auto& p : parameters()) {
            if (p.tensor.rank() != 2 || !p.name.ends_with(".weight")) continue;
            const double b = weight_bound_b(p.tensor);
            if (b <= 1.0) continue;
            Tensor t = p.tensor;
            for (auto& v : t.data()) v /= std::sqrt(b);
        }
    }
}

CertMode Model::cert_mode() const {
    if (!arch_.layers.empty()) {
        const auto& last = arch_.layers.back();
        if (last.kind == LayerKind::heads && last.head == HeadKind::multi) return CertMode::multi_l2nnn;
    }
    return CertMode::single_l2nnn;
}

Tensor Model::forward(const Tensor& x, const ForwardContext& ctx) const {
    Tensor h = x;
    for (const auto& layer : layers_) h = layer->forward(h, ctx);
    if (h.rank() != 2) h = ops::reshape(h, {h.dim(0), h.numel() / h.dim(0)});
    return h;
}

std::vector<Tensor> Model::forward_trace(const Tensor& x, const ForwardContext& ctx) const {
    std::vector<Tensor> trace{x};
    for (const auto& layer : layers_) trace.push_back(layer->forward(trace.back(), ctx));
    return trace;
}

Tensor Model::logits(const Tensor& x) const {
    NoGradGuard no_grad;
    return forward(x, eval_context());
}

std::vector<NamedParam> Model::parameters() const {
    std::vector<NamedParam> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect_parameters("layer" + std::to_string(i) + ".", out);
    return out;
}

Tensor Model::weight_penalty() const {
    std::vector<Tensor> terms;
    for (const auto& layer : layers_) layer->collect_penalties(terms);
    Tensor total = Tensor::scalar(0.0);
    for (const auto& t : terms) total = ops::add(total, ops::reshape(t, {1}));
    return total;
}

void Model::invalidate() const {
    for (const auto& layer : layers_) layer->invalidate();
}

}  // namespace l2nnn
