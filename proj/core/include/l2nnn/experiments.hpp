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

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "l2nnn/attack.hpp"
#include "l2nnn/baselines.hpp"
#include "l2nnn/certify.hpp"
#include "l2nnn/checkpoint.hpp"
#include "l2nnn/config.hpp"
#include "l2nnn/datasets.hpp"
#include "l2nnn/train.hpp"

// Experiment drivers shared by the command-line tool and the acceptance gate.
namespace l2nnn {

struct DataBundle {
    Dataset train;
    Dataset test;
};

/// First data.train_size training rows (labels scrambled per the config) and
/// first data.test_size test rows of the MNIST files in data.dir.
DataBundle load_mnist(const RunConfig& cfg);

Recipe recipe_from(const RunConfig& cfg);
TrainOptions train_options_from(const RunConfig& cfg);
BaselineConfig baseline_config_from(const RunConfig& cfg, const ArchSpec& l2nnn_arch);
TrainOptions baseline_options_from(const RunConfig& cfg);

using EpochLog = std::function<void(const EpochMetrics&)>;

/// Trains the recipe from a fresh initialization seeded with `seed`.
Checkpoint train_recipe(const Recipe& recipe, const TrainOptions& opts, const Dataset& train, const Dataset* test,
                        std::uint64_t seed, const EpochLog& log = {});

struct CertifySummary {
    std::size_t count = 0;
    double accuracy = 0.0;
    double avg_gap = 0.0;
    double avg_radius = 0.0;
};
CertifySummary summarize(const std::vector<Certificate>& certs);

/// Fraction of inputs classified correctly and not broken by PGD at eps.
double robust_accuracy(const Model& model, const Tensor& x, std::span<const int> labels, double eps,
                       const AttackConfig& cfg);

struct BinRow {
    std::size_t bin = 0;
    std::size_t count = 0;
    double gap_lo = 0.0, gap_hi = 0.0;
    double nominal = 0.0, robust = 0.0;
};
/// Inputs sorted by ascending gap and cut into `bins` near-equal bins.
std::vector<BinRow> confidence_bins(const Model& model, const Tensor& x, std::span<const int> labels,
                                    std::size_t bins, double eps, const AttackConfig& cfg);

struct HybridMetrics {
    double threshold = 0.0;
    double accuracy = 0.0;
    double delegated_fraction = 0.0;
    double primary_accuracy = 0.0;
    double fallback_accuracy = 0.0;
};
/// Inputs whose primary gap is >= threshold keep the primary answer; the
/// rest go to the fallback model.
HybridMetrics hybrid_eval(const Model& primary, const Model& fallback, const Tensor& x, std::span<const int> labels,
                          double threshold);
double median_gap(const Model& model, const Tensor& x);

struct ScrambleRow {
    double fraction = 0.0;
    std::string family;  // "l2nnn" or "baseline"
    double train_acc = 0.0;  // against the (scrambled) training labels
    double test_acc = 0.0;
    double train_gap = 0.0;
    double test_gap = 0.0;
    bool early_stopping_applicable = true;
};
std::vector<ScrambleRow> scramble_experiment(const RunConfig& cfg, const DataBundle& clean,
                                             const std::function<void(const std::string&)>& progress = {});

struct AblationRow {
    std::string variant;  // "full" or an ablation name
    double accuracy = 0.0;
    double avg_gap = 0.0;
    double robust_accuracy = 0.0;
    double score = 0.0;  // avg_gap * robust_accuracy
    bool gap_meaningful = true;
};
AblationRow ablation_row(const std::string& variant, const Model& model, const Dataset& test, double eps,
                         const AttackConfig& cfg, std::size_t samples);

/// Spearman rank correlation with average ranks for ties; +inf values rank last.
double spearman(std::span<const double> a, std::span<const double> b);

/// Tab-separated table with a header row.
void write_tsv(const std::filesystem::path& path, const std::string& header, const std::vector<std::string>& rows);

std::string sweep_header();
std::vector<std::string> sweep_rows(const SweepResult& r);
std::string bins_header();
std::vector<std::string> bin_rows(const std::vector<BinRow>& rows);
std::string scramble_header();
std::vector<std::string> scramble_rows(const std::vector<ScrambleRow>& rows);
std::string ablation_header();
std::vector<std::string> ablation_rows(const std::vector<AblationRow>& rows);

}  // namespace l2nnn
