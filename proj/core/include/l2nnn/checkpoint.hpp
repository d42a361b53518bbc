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
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "l2nnn/losses.hpp"
#include "l2nnn/model.hpp"
#include "l2nnn/train.hpp"

namespace l2nnn {

// Binary layout, all integers little-endian:
//   "L2NNNCKP"  u32 version  u32 len + canonical architecture text
//   u32 blob count, then per blob:
//     u32 name len, name, u8 dtype (1 = f64), u32 rank, u64 dims..., payload
//   u64 FNV-1a of every preceding byte
// Blob names: model parameters as reported by Model::parameters(), then
// "loss/u", "loss/v", "state/epoch" and "opt/<param>" momentum buffers.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    Model model;
    LossParams loss;
    TrainState state;
};

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const LossParams* loss, const TrainState* state);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model, const LossParams* loss = nullptr,
                     const TrainState* state = nullptr);
/// Throws CheckpointError on a bad magic, version, hash, or a parameter set
/// that does not match the stored architecture.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace l2nnn
