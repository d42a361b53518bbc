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

#include "l2nnn/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace l2nnn {

namespace {

std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os.precision(precision);
    os << v;
    return os.str();
}

Tensor first_rows(const Tensor& x, std::size_t n) {
    Shape s = x.shape();
    const std::size_t per = x.numel() / s[0];
    n = std::min(n, s[0]);
    s[0] = n;
    return Tensor(s, std::vector<double>(x.data().begin(), x.data().begin() + n * per));
}

}  // namespace

DataBundle load_mnist(const RunConfig& cfg) {
    DataBundle d;
    d.train = load_idx(cfg.data_dir / "train-images-idx3-ubyte", cfg.data_dir / "train-labels-idx1-ubyte", cfg.train_size);
    d.test = load_idx(cfg.data_dir / "t10k-images-idx3-ubyte", cfg.data_dir / "t10k-labels-idx1-ubyte", cfg.test_size);
    if (cfg.scramble_fraction > 0.0) d.train = scramble_labels(d.train, cfg.scramble_fraction, cfg.scramble_seed);
    return d;
}

Recipe recipe_from(const RunConfig& cfg) { return {ArchSpec::parse(cfg.arch), cfg.loss}; }

TrainOptions train_options_from(const RunConfig& cfg) {
    TrainOptions o = cfg.train;
    o.seed = cfg.seed;
    return o;
}

BaselineConfig baseline_config_from(const RunConfig& cfg, const ArchSpec& l2nnn_arch) {
    BaselineConfig b;
    b.arch = baseline_arch(l2nnn_arch);
    b.weight_decay = cfg.baseline_weight_decay;
    b.dropout_rate = cfg.baseline_dropout;
    b.early_stopping = cfg.baseline_early_stopping;
    b.patience = cfg.baseline_patience;
    b.holdout = cfg.baseline_holdout;
    b.split_seed = cfg.split_seed;
    return b;
}

TrainOptions baseline_options_from(const RunConfig& cfg) {
    TrainOptions o = cfg.train;
    o.epochs = cfg.baseline_epochs;
    o.lr = cfg.baseline_lr;
    o.seed = cfg.seed;
    return o;
}

Checkpoint train_recipe(const Recipe& recipe, const TrainOptions& opts, const Dataset& train, const Dataset* test,
                        std::uint64_t seed, const EpochLog& log) {
    Checkpoint ck{Model(recipe.arch, seed), {}, {}};
    ck.loss = LossParams::init(ck.model.num_classes(), recipe.loss);
    Trainer trainer(ck.model, ck.loss, recipe.loss, opts);
    trainer.fit(train, test, [&](const EpochMetrics& m) {
        if (log) log(m);
        return true;
    });
    ck.state = trainer.state();
    return ck;
}

CertifySummary summarize(const std::vector<Certificate>& certs) {
    CertifySummary s;
    s.count = certs.size();
    if (certs.empty()) return s;
    for (const auto& c : certs) {
        s.accuracy += c.predicted == c.label ? 1.0 : 0.0;
        s.avg_gap += c.gap;
        s.avg_radius += c.radius;
    }
    s.accuracy /= s.count;
    s.avg_gap /= s.count;
    s.avg_radius /= s.count;
    return s;
}

double robust_accuracy(const Model& model, const Tensor& x, std::span<const int> labels, double eps,
                       const AttackConfig& cfg) {
    const int ladder[2] = {0, cfg.steps};
    const auto sweep = iteration_sweep(model, x, labels, eps, ladder, cfg);
    return sweep.rows.back().accuracy();
}

std::vector<BinRow> confidence_bins(const Model& model, const Tensor& x, std::span<const int> labels,
                                    std::size_t bins, double eps, const AttackConfig& cfg) {
    if (bins < 2) throw std::invalid_argument("bins: need at least two bins");
    const std::size_t n = x.dim(0);
    if (bins > n) throw std::invalid_argument("bins: more bins than inputs");
    const auto certs = certify(model, x, labels);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return certs[a].gap < certs[b].gap; });

    // Attack everything once; per-bin tallies follow.
    const std::size_t per = x.numel() / n;
    std::vector<bool> robust(n, false);
    {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < n; ++i)
            if (certs[i].predicted == labels[i]) idx.push_back(i);
        if (!idx.empty()) {
            Shape s = x.shape();
            s[0] = idx.size();
            std::vector<double> xs(idx.size() * per);
            std::vector<int> ls(idx.size());
            for (std::size_t a = 0; a < idx.size(); ++a) {
                std::copy_n(x.data().begin() + idx[a] * per, per, xs.begin() + a * per);
                ls[a] = labels[idx[a]];
            }
            const auto res = pgd_l2_batch(model, Tensor(s, std::move(xs)), ls, std::vector<double>(idx.size(), eps), cfg, true);
            for (std::size_t a = 0; a < idx.size(); ++a) robust[idx[a]] = !res[a].success;
        }
    }

    std::vector<BinRow> rows;
    for (std::size_t b = 0; b < bins; ++b) {
        const std::size_t lo = b * n / bins, hi = (b + 1) * n / bins;
        BinRow r;
        r.bin = b;
        r.count = hi - lo;
        if (r.count == 0) {
            rows.push_back(r);
            continue;
        }
        r.gap_lo = certs[order[lo]].gap;
        r.gap_hi = certs[order[hi - 1]].gap;
        for (std::size_t j = lo; j < hi; ++j) {
            const auto i = order[j];
            r.nominal += certs[i].predicted == labels[i] ? 1.0 : 0.0;
            r.robust += robust[i] ? 1.0 : 0.0;
        }
        r.nominal /= r.count;
        r.robust /= r.count;
        rows.push_back(r);
    }
    return rows;
}

HybridMetrics hybrid_eval(const Model& primary, const Model& fallback, const Tensor& x, std::span<const int> labels,
                          double threshold) {
    if (primary.num_classes() != fallback.num_classes())
        throw std::invalid_argument("hybrid: models disagree on the number of classes (" +
                                    std::to_string(primary.num_classes()) + " vs " +
                                    std::to_string(fallback.num_classes()) + ")");
    const auto a = certify(primary, x, labels);
    const auto b = certify(fallback, x, labels);
    HybridMetrics m;
    m.threshold = threshold;
    const std::size_t n = a.size();
    if (n == 0) return m;
    std::size_t delegated = 0, correct = 0, pa = 0, fa = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool keep = a[i].gap >= threshold;
        delegated += keep ? 0 : 1;
        correct += (keep ? a[i].predicted : b[i].predicted) == labels[i];
        pa += a[i].predicted == labels[i];
        fa += b[i].predicted == labels[i];
    }
    m.accuracy = static_cast<double>(correct) / n;
    m.delegated_fraction = static_cast<double>(delegated) / n;
    m.primary_accuracy = static_cast<double>(pa) / n;
    m.fallback_accuracy = static_cast<double>(fa) / n;
    return m;
}

double median_gap(const Model& model, const Tensor& x) {
    const auto certs = certify(model, x, {});
    std::vector<double> gaps;
    for (const auto& c : certs) gaps.push_back(c.gap);
    if (gaps.empty()) return 0.0;
    std::sort(gaps.begin(), gaps.end());
    const std::size_t n = gaps.size();
    return n % 2 ? gaps[n / 2] : 0.5 * (gaps[n / 2 - 1] + gaps[n / 2]);
}

std::vector<ScrambleRow> scramble_experiment(const RunConfig& cfg, const DataBundle& clean,
                                             const std::function<void(const std::string&)>& progress) {
    std::vector<ScrambleRow> rows;
    const Recipe recipe = recipe_from(cfg);
    for (double f : cfg.scramble_fractions) {
        const Dataset train = scramble_labels(clean.train, f, cfg.scramble_seed);
        if (progress) progress("fraction " + fmt(f) + ": l2nnn");
        const auto ck = train_recipe(recipe, train_options_from(cfg), train, nullptr, cfg.seed);
        ScrambleRow l{f, "l2nnn"};
        const auto tr = evaluate(ck.model, train), te = evaluate(ck.model, clean.test);
        l.train_acc = tr.accuracy;
        l.train_gap = tr.avg_gap;
        l.test_acc = te.accuracy;
        l.test_gap = te.avg_gap;
        rows.push_back(l);

        if (progress) progress("fraction " + fmt(f) + ": baseline");
        const auto base = train_baseline(baseline_config_from(cfg, recipe.arch), baseline_options_from(cfg), train,
                                         nullptr, f, cfg.seed);
        ScrambleRow b{f, "baseline"};
        const auto btr = evaluate(base.model, train), bte = evaluate(base.model, clean.test);
        b.train_acc = btr.accuracy;
        b.train_gap = btr.avg_gap;
        b.test_acc = bte.accuracy;
        b.test_gap = bte.avg_gap;
        b.early_stopping_applicable = base.early_stopping_applicable;
        rows.push_back(b);
    }
    return rows;
}

AblationRow ablation_row(const std::string& variant, const Model& model, const Dataset& test, double eps,
                         const AttackConfig& cfg, std::size_t samples) {
    AblationRow r;
    r.variant = variant;
    const auto ev = evaluate(model, test);
    r.accuracy = ev.accuracy;
    r.avg_gap = ev.avg_gap;
    const std::size_t n = std::min(samples, test.size());
    const Tensor x = first_rows(test.images, n);
    r.robust_accuracy = robust_accuracy(model, x, std::span<const int>(test.labels.data(), n), eps, cfg);
    r.score = r.avg_gap * r.robust_accuracy;
    // Without weight control the logits have no scale, so the gap says nothing.
    r.gap_meaningful = model.mode() != WeightMode::unconstrained;
    return r;
}

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("spearman: need two equal-length samples");
    auto ranks = [](std::span<const double> v) {
        const std::size_t n = v.size();
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](auto i, auto j) { return v[i] < v[j]; });
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n;) {
            std::size_t j = i;
            while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
            const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
            for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
            i = j + 1;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n + 1.0) / 2.0;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        cov += (ra[i] - mean) * (rb[i] - mean);
        va += (ra[i] - mean) * (ra[i] - mean);
        vb += (rb[i] - mean) * (rb[i] - mean);
    }
    if (va == 0.0 || vb == 0.0) return 0.0;
    return cov / std::sqrt(va * vb);
}

void write_tsv(const std::filesystem::path& path, const std::string& header, const std::vector<std::string>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::ios_base::failure("cannot write " + path.string());
    out << header << '\n';
    for (const auto& r : rows) out << r << '\n';
    if (!out) throw std::ios_base::failure("write failed for " + path.string());
}

std::string sweep_header() { return "max_iter\trobust\ttotal\taccuracy"; }

std::vector<std::string> sweep_rows(const SweepResult& r) {
    std::vector<std::string> out;
    for (const auto& row : r.rows)
        out.push_back(std::to_string(row.max_iter) + '\t' + std::to_string(row.robust) + '\t' + std::to_string(row.total) +
                      '\t' + fmt(row.accuracy()));
    return out;
}

std::string bins_header() { return "bin\tcount\tgap_lo\tgap_hi\tnominal\trobust"; }

std::vector<std::string> bin_rows(const std::vector<BinRow>& rows) {
    std::vector<std::string> out;
    for (const auto& r : rows)
        out.push_back(std::to_string(r.bin) + '\t' + std::to_string(r.count) + '\t' + fmt(r.gap_lo) + '\t' + fmt(r.gap_hi) +
                      '\t' + fmt(r.nominal) + '\t' + fmt(r.robust));
    return out;
}

std::string scramble_header() { return "fraction\tfamily\ttrain_acc\ttest_acc\tgap_train\tgap_test\tearly_stopping"; }

std::vector<std::string> scramble_rows(const std::vector<ScrambleRow>& rows) {
    std::vector<std::string> out;
    for (const auto& r : rows)
        out.push_back(fmt(r.fraction) + '\t' + r.family + '\t' + fmt(r.train_acc) + '\t' + fmt(r.test_acc) + '\t' +
                      fmt(r.train_gap) + '\t' + fmt(r.test_gap) + '\t' +
                      (r.family == "l2nnn" ? "-" : (r.early_stopping_applicable ? "ok" : "NA")));
    return out;
}

std::string ablation_header() { return "variant\taccuracy\tavg_gap\trobust_acc\tscore\tgap_meaningful"; }

std::vector<std::string> ablation_rows(const std::vector<AblationRow>& rows) {
    std::vector<std::string> out;
    for (const auto& r : rows)
        out.push_back(r.variant + '\t' + fmt(r.accuracy) + '\t' + fmt(r.avg_gap) + '\t' + fmt(r.robust_accuracy) + '\t' +
                      fmt(r.score) + '\t' + (r.gap_meaningful ? "yes" : "no"));
    return out;
}

}  // namespace l2nnn
