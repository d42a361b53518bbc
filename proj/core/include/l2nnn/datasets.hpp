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
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "l2nnn/tensor.hpp"

namespace l2nnn {

/// Images [N x C x H x W] (or [N x D]) in [0, 1] plus integer labels.
struct Dataset {
    Tensor images;
    std::vector<int> labels;
    /// Labels before scrambling; equal to `labels` otherwise.
    std::vector<int> true_labels;
    std::size_t num_classes = 10;
    std::uint64_t scramble_seed = 0;

    std::size_t size() const { return labels.size(); }
    /// Shape of one sample (no batch axis).
    Shape sample_shape() const;
    /// Rows at `indices`, in that order.
    Dataset subset(std::span<const std::size_t> indices) const;
    /// Rows [begin, end).
    Dataset slice(std::size_t begin, std::size_t end) const;
    /// Images of rows at `indices` as one batch tensor.
    Tensor gather(std::span<const std::size_t> indices) const;
};

class IdxError : public std::runtime_error {
public:
    enum class Kind { io, bad_magic, truncated, count_mismatch };
    IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;  // 2051
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;  // 2049

/// Reads an IDX image/label file pair. `limit` keeps only the first rows
/// (0 = all). Pixels are divided by 255.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t limit = 0);
/// Writes `ds` back as an IDX pair; pixels are rounded to the nearest byte.
void write_idx(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels);

/// Redraws the labels of a uniformly chosen floor(fraction * N)-subset
/// uniformly from [0, K). Redraws may coincide with the original label.
Dataset scramble_labels(const Dataset& ds, double fraction, std::uint64_t seed);

/// K Gaussian clusters in [0, 1]^dim: x = clamp(0.5 + 0.1 * (separation * e_k + xi)),
/// xi ~ N(0, I), e_k the k-th unit vector. Requires dim >= K.
Dataset synthetic_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim, double separation,
                        std::uint64_t seed);
/// Bayes accuracy of the blob problem without clamping:
///   integral phi(t) Phi(t + separation)^(K-1) dt.
double blobs_bayes_accuracy(std::size_t num_classes, double separation);

/// Random disjoint split: (rest, holdout) with `holdout` rows held out.
std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, std::size_t holdout, std::uint64_t seed);

/// FNV-1a 64 over raw bytes.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t hash = 0xcbf29ce484222325ULL);
/// FNV-1a over pixel values and labels.
std::uint64_t dataset_hash(const Dataset& ds);

}  // namespace l2nnn
