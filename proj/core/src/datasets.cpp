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

#include "l2nnn/datasets.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

namespace l2nnn {

Shape Dataset::sample_shape() const {
    Shape s = images.shape();
    s.erase(s.begin());
    return s;
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
    Shape shape = images.shape();
    const std::size_t per = images.numel() / shape[0];
    shape[0] = indices.size();
    std::vector<double> out(indices.size() * per);
    auto src = images.data();
    for (std::size_t a = 0; a < indices.size(); ++a) std::copy_n(src.begin() + indices[a] * per, per, out.begin() + a * per);
    return Tensor(shape, std::move(out));
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.images = gather(indices);
    out.num_classes = num_classes;
    out.scramble_seed = scramble_seed;
    for (auto i : indices) {
        out.labels.push_back(labels.at(i));
        out.true_labels.push_back(true_labels.at(i));
    }
    return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
    end = std::min(end, size());
    std::vector<std::size_t> idx(end > begin ? end - begin : 0);
    std::iota(idx.begin(), idx.end(), begin);
    return subset(idx);
}

namespace {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IdxError(IdxError::Kind::io, "idx: cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IdxError(IdxError::Kind::io, "idx: cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit) {
    const auto img = read_bytes(images);
    const auto lab = read_bytes(labels);
    if (img.size() < 4) throw IdxError(IdxError::Kind::truncated, "idx: " + images.string() + " is truncated (no header)");
    if (lab.size() < 4) throw IdxError(IdxError::Kind::truncated, "idx: " + labels.string() + " is truncated (no header)");
    if (be32(img, 0) != kIdxImageMagic)
        throw IdxError(IdxError::Kind::bad_magic, "idx: " + images.string() + " has bad magic " + std::to_string(be32(img, 0)));
    if (be32(lab, 0) != kIdxLabelMagic)
        throw IdxError(IdxError::Kind::bad_magic, "idx: " + labels.string() + " has bad magic " + std::to_string(be32(lab, 0)));
    if (img.size() < 16) throw IdxError(IdxError::Kind::truncated, "idx: " + images.string() + " header is truncated");
    if (lab.size() < 8) throw IdxError(IdxError::Kind::truncated, "idx: " + labels.string() + " header is truncated");
    const std::size_t n = be32(img, 4), h = be32(img, 8), w = be32(img, 12);
    const std::size_t nl = be32(lab, 4);
    if (img.size() < 16 + n * h * w)
        throw IdxError(IdxError::Kind::truncated, "idx: " + images.string() + " holds fewer than " + std::to_string(n) + " images");
    if (lab.size() < 8 + nl)
        throw IdxError(IdxError::Kind::truncated, "idx: " + labels.string() + " holds fewer than " + std::to_string(nl) + " labels");
    if (n != nl)
        throw IdxError(IdxError::Kind::count_mismatch,
                       "idx: " + std::to_string(n) + " images but " + std::to_string(nl) + " labels");

    const std::size_t keep = limit ? std::min(limit, n) : n;
    std::vector<double> px(keep * h * w);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = img[16 + i] / 255.0;
    Dataset ds;
    ds.images = Tensor({keep, 1, h, w}, std::move(px));
    ds.labels.resize(keep);
    std::size_t k = 0;
    for (std::size_t i = 0; i < keep; ++i) {
        ds.labels[i] = lab[8 + i];
        k = std::max<std::size_t>(k, lab[8 + i] + 1);
    }
    ds.true_labels = ds.labels;
    ds.num_classes = std::max<std::size_t>(k, 10);
    return ds;
}

void write_idx(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels) {
    const auto& s = ds.images.shape();
    const std::size_t n = ds.size();
    const std::size_t h = s.size() >= 2 ? s[s.size() - 2] : 1, w = s.back();
    std::vector<std::uint8_t> img;
    img.reserve(16 + ds.images.numel());
    put_be32(img, kIdxImageMagic);
    put_be32(img, static_cast<std::uint32_t>(n));
    put_be32(img, static_cast<std::uint32_t>(h));
    put_be32(img, static_cast<std::uint32_t>(w));
    for (double v : ds.images.data()) img.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
    std::vector<std::uint8_t> lab;
    put_be32(lab, kIdxLabelMagic);
    put_be32(lab, static_cast<std::uint32_t>(n));
    for (int l : ds.labels) lab.push_back(static_cast<std::uint8_t>(l));
    write_bytes(images, img);
    write_bytes(labels, lab);
}

Dataset scramble_labels(const Dataset& ds, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("scramble_labels: fraction must lie in [0, 1]");
    Dataset out = ds;
    out.labels = ds.labels;
    out.scramble_seed = seed;
    const std::size_t n = ds.size();
    const std::size_t m = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    if (m == 0) return out;
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    // Partial Fisher-Yates: the first m entries form a uniform m-subset.
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    std::uniform_int_distribution<int> label(0, static_cast<int>(ds.num_classes) - 1);
    for (std::size_t i = 0; i < m; ++i) out.labels[idx[i]] = label(rng);
    return out;
}

Dataset synthetic_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim, double separation,
                        std::uint64_t seed) {
    if (separation < 0.0) throw std::invalid_argument("synthetic_blobs: separation must be >= 0");
    if (dim < num_classes) throw std::invalid_argument("synthetic_blobs: need dim >= number of classes");
    if (num_classes < 2) throw std::invalid_argument("synthetic_blobs: need at least two classes");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    const std::size_t n = num_classes * per_class;
    std::vector<double> px(n * dim);
    Dataset ds;
    ds.num_classes = num_classes;
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t k = i % num_classes;
        ds.labels[i] = static_cast<int>(k);
        for (std::size_t j = 0; j < dim; ++j) {
            const double center = j == k ? separation : 0.0;
            px[i * dim + j] = std::clamp(0.5 + 0.1 * (center + gauss(rng)), 0.0, 1.0);
        }
    }
    ds.images = Tensor({n, dim}, std::move(px));
    ds.true_labels = ds.labels;
    return ds;
}

double blobs_bayes_accuracy(std::size_t num_classes, double separation) {
    // The Bayes rule picks the largest of the K class coordinates; the true
    // one is N(s, 1), the rest N(0, 1). Trapezoid rule on [-10, 10].
    const int steps = 20000;
    const double lo = -10.0, hi = 10.0, h = (hi - lo) / steps;
    const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::acos(-1.0));
    double acc = 0.0;
    for (int i = 0; i <= steps; ++i) {
        const double t = lo + i * h;
        const double phi = inv_sqrt2pi * std::exp(-0.5 * t * t);
        const double cdf = 0.5 * std::erfc(-(t + separation) / std::sqrt(2.0));
        const double f = phi * std::pow(cdf, static_cast<double>(num_classes - 1));
        acc += (i == 0 || i == steps) ? 0.5 * f : f;
    }
    return acc * h;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, std::size_t holdout, std::uint64_t seed) {
    if (holdout > ds.size()) throw std::invalid_argument("split_holdout: holdout larger than the dataset");
    std::vector<std::size_t> idx(ds.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::size_t> held(idx.begin(), idx.begin() + holdout);
    std::vector<std::size_t> rest(idx.begin() + holdout, idx.end());
    std::sort(held.begin(), held.end());
    std::sort(rest.begin(), rest.end());
    return {ds.subset(rest), ds.subset(held)};
}

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t hash) {
    for (auto b : bytes) {
        hash ^= b;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

std::uint64_t dataset_hash(const Dataset& ds) {
    auto px = ds.images.data();
    std::uint64_t h = fnv1a64({reinterpret_cast<const std::uint8_t*>(px.data()), px.size_bytes()});
    return fnv1a64({reinterpret_cast<const std::uint8_t*>(ds.labels.data()), ds.labels.size() * sizeof(int)}, h);
}

}  // namespace l2nnn
