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
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "l2nnn/attack.hpp"
#include "l2nnn/losses.hpp"
#include "l2nnn/train.hpp"

namespace l2nnn {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kConfigVersion = 1;

/// Every knob of a run. All fields have defaults; a config file overrides
/// them, command-line flags override the file.
struct RunConfig {
    std::string arch;  // canonical ArchSpec text

    std::filesystem::path data_dir = "data/mnist";
    std::size_t train_size = 10000;
    std::size_t test_size = 2000;
    double scramble_fraction = 0.0;
    std::uint64_t scramble_seed = 1;
    std::uint64_t split_seed = 0;

    TrainOptions train;
    LossConfig loss;

    AttackConfig attack;
    std::vector<int> ladder = {0, 10, 100, 1000, 10000};
    std::size_t attack_samples = 200;
    double search_eps_max = 4.0;

    std::size_t bins = 10;
    /// Negative selects the median gap of the primary model.
    double hybrid_threshold = -1.0;
    std::vector<double> scramble_fractions = {0.0, 0.5, 1.0};
    std::vector<std::string> ablations = {"weight_reg", "loss_c", "norm_pooling", "two_sided_relu"};

    // Unconstrained comparison networks.
    int baseline_epochs = 10;
    double baseline_lr = 0.05;
    double baseline_weight_decay = 0.0;
    double baseline_dropout = 0.0;
    bool baseline_early_stopping = false;
    int baseline_patience = 3;
    std::size_t baseline_holdout = 1000;

    std::uint64_t seed = 0;
    std::filesystem::path out = "runs";

    RunConfig();
    /// Throws ConfigError naming the field.
    void validate() const;
};

/// Parses `key = value` lines (`#` starts a comment). A `version` line is
/// required; unknown keys and malformed values are errors naming the key.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});
/// Applies one `key=value` override.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);
/// Canonical text; parse_config(to_text(c)) == c.
std::string to_text(const RunConfig& cfg);
std::vector<std::string> config_keys();

}  // namespace l2nnn
