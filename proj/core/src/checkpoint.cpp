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

#include "l2nnn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "l2nnn/datasets.hpp"

namespace l2nnn {

namespace {

constexpr char kMagic[8] = {'L', '2', 'N', 'N', 'N', 'C', 'K', 'P'};
constexpr std::uint8_t kDtypeF64 = 1;

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        auto b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    template <typename T>
    void le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void str(const std::string& s) {
        le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void blob(const std::string& name, const Shape& shape, std::span<const double> data) {
        str(name);
        le<std::uint8_t>(kDtypeF64);
        le<std::uint32_t>(static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) le<std::uint64_t>(d);
        for (double v : data) le<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }
    const std::vector<std::uint8_t>& view() const { return out_; }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
    std::span<const std::uint8_t> take(std::size_t n) {
        if (n > in_.size() - pos_) throw CheckpointError("checkpoint: truncated");
        auto s = in_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    template <typename T>
    T le() {
        auto b = take(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(b[i]) << (8 * i));
        return v;
    }
    std::string str() {
        const auto n = le<std::uint32_t>();
        auto b = take(n);
        return std::string(b.begin(), b.end());
    }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

struct Blob {
    Shape shape;
    std::vector<double> data;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const LossParams* loss, const TrainState* state) {
    std::vector<std::pair<std::string, Blob>> blobs;
    for (const auto& p : model.parameters())
        blobs.push_back({p.name, {p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()}}});
    if (loss) {
        blobs.push_back({"loss/u", {loss->u.shape(), {loss->u.data().begin(), loss->u.data().end()}}});
        blobs.push_back({"loss/v", {loss->v.shape(), {loss->v.data().begin(), loss->v.data().end()}}});
    }
    if (state) {
        blobs.push_back({"state/epoch", {{1}, {static_cast<double>(state->epoch)}}});
        for (const auto& [name, buf] : state->momentum) blobs.push_back({"opt/" + name, {{buf.size()}, buf}});
    }

    Writer w;
    w.bytes(kMagic, sizeof(kMagic));
    w.le<std::uint32_t>(kCheckpointVersion);
    w.str(model.arch().to_string());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(blobs.size()));
    for (const auto& [name, b] : blobs) w.blob(name, b.shape, b.data);
    const std::uint64_t hash = fnv1a64(w.view());
    w.le<std::uint64_t>(hash);
    return w.take();
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < sizeof(kMagic) + 8 || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError("checkpoint: bad magic");
    const auto body = bytes.first(bytes.size() - 8);
    Reader tail(bytes.last(8));
    if (tail.le<std::uint64_t>() != fnv1a64(body)) throw CheckpointError("checkpoint: content hash mismatch");

    Reader r(body);
    r.take(sizeof(kMagic));
    const auto version = r.le<std::uint32_t>();
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
    ArchSpec arch;
    try {
        arch = ArchSpec::parse(r.str());
    } catch (const std::invalid_argument& e) {
        throw CheckpointError(std::string("checkpoint: bad architecture: ") + e.what());
    }
    std::map<std::string, Blob> blobs;
    const auto count = r.le<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        if (r.le<std::uint8_t>() != kDtypeF64) throw CheckpointError("checkpoint: blob '" + name + "' has unknown dtype");
        Blob b;
        b.shape.resize(r.le<std::uint32_t>());
        for (auto& d : b.shape) d = r.le<std::uint64_t>();
        b.data.resize(shape_numel(b.shape));
        for (auto& v : b.data) v = std::bit_cast<double>(r.le<std::uint64_t>());
        blobs.emplace(std::move(name), std::move(b));
    }

    Checkpoint ck{Model(arch, 0), {}, {}};
    for (const auto& p : ck.model.parameters()) {
        auto it = blobs.find(p.name);
        if (it == blobs.end()) throw CheckpointError("checkpoint: missing parameter '" + p.name + "'");
        if (it->second.shape != p.tensor.shape())
            throw CheckpointError("checkpoint: parameter '" + p.name + "' has shape " + shape_to_string(it->second.shape) +
                                  ", architecture expects " + shape_to_string(p.tensor.shape()));
        Tensor t = p.tensor;
        std::copy(it->second.data.begin(), it->second.data.end(), t.data().begin());
        blobs.erase(it);
    }
    ck.model.invalidate();

    LossConfig defaults;
    ck.loss = LossParams::init(ck.model.num_classes(), defaults);
    if (auto it = blobs.find("loss/u"); it != blobs.end()) {
        if (it->second.data.size() != ck.model.num_classes()) throw CheckpointError("checkpoint: loss/u does not match class count");
        std::copy(it->second.data.begin(), it->second.data.end(), ck.loss.u.data().begin());
        blobs.erase(it);
    }
    if (auto it = blobs.find("loss/v"); it != blobs.end()) {
        ck.loss.v.data()[0] = it->second.data.at(0);
        blobs.erase(it);
    }
    if (auto it = blobs.find("state/epoch"); it != blobs.end()) {
        ck.state.epoch = static_cast<int>(it->second.data.at(0));
        blobs.erase(it);
    }
    for (auto& [name, b] : blobs) {
        if (!name.starts_with("opt/")) throw CheckpointError("checkpoint: unexpected blob '" + name + "'");
        ck.state.momentum[name.substr(4)] = std::move(b.data);
    }
    return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const LossParams* loss,
                     const TrainState* state) {
    const auto bytes = serialize_checkpoint(model, loss, state);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CheckpointError("checkpoint: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("checkpoint: cannot open " + path.string());
    const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return deserialize_checkpoint(bytes);
}

}  // namespace l2nnn
