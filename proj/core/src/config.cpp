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

#include "l2nnn/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "l2nnn/model.hpp"

namespace l2nnn {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

[[noreturn]] void bad(std::string_view key, std::string_view value, const char* want) {
    throw ConfigError("config: '" + std::string(key) + "' expects " + want + ", got '" + std::string(value) + "'");
}

template <typename T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, v, std::is_integral_v<T> ? "an integer" : "a number");
    return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    bad(key, v, "true or false");
}

template <typename T>
std::vector<T> parse_list(std::string_view key, std::string_view v) {
    std::vector<T> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= v.size(); ++i) {
        if (i == v.size() || v[i] == ',') {
            const auto item = trim(v.substr(start, i - start));
            if (!item.empty()) {
                if constexpr (std::is_same_v<T, std::string>) out.emplace_back(item);
                else out.push_back(parse_number<T>(key, item));
            }
            start = i + 1;
        }
    }
    return out;
}

std::string num(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

template <typename T>
std::string join(const std::vector<T>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_same_v<T, std::string>) out += xs[i];
        else if constexpr (std::is_floating_point_v<T>) out += num(xs[i]);
        else out += std::to_string(xs[i]);
    }
    return out;
}

struct Field {
    std::string key;
    std::function<void(RunConfig&, std::string_view)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number_field(std::string key, T RunConfig::*member) {
    return {key, [key, member](RunConfig& c, std::string_view v) { c.*member = parse_number<T>(key, v); },
            [member](const RunConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return num(c.*member);
                else return std::to_string(c.*member);
            }};
}

template <typename S, typename T>
Field nested_number(std::string key, S RunConfig::*outer, T S::*member) {
    return {key, [key, outer, member](RunConfig& c, std::string_view v) { (c.*outer).*member = parse_number<T>(key, v); },
            [outer, member](const RunConfig& c) {
                if constexpr (std::is_floating_point_v<T>) return num((c.*outer).*member);
                else return std::to_string((c.*outer).*member);
            }};
}

template <typename S>
Field nested_bool(std::string key, S RunConfig::*outer, bool S::*member) {
    return {key, [key, outer, member](RunConfig& c, std::string_view v) { (c.*outer).*member = parse_bool(key, v); },
            [outer, member](const RunConfig& c) { return std::string((c.*outer).*member ? "true" : "false"); }};
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        f.push_back({"arch",
                     [](RunConfig& c, std::string_view v) {
                         try {
                             c.arch = ArchSpec::parse(v).to_string();
                         } catch (const std::invalid_argument& e) {
                             throw ConfigError(std::string("config: 'arch': ") + e.what());
                         }
                     },
                     [](const RunConfig& c) { return c.arch; }});
        f.push_back({"data.dir", [](RunConfig& c, std::string_view v) { c.data_dir = std::string(v); },
                     [](const RunConfig& c) { return c.data_dir.string(); }});
        f.push_back(number_field("data.train_size", &RunConfig::train_size));
        f.push_back(number_field("data.test_size", &RunConfig::test_size));
        f.push_back(number_field("data.scramble_fraction", &RunConfig::scramble_fraction));
        f.push_back(number_field("data.scramble_seed", &RunConfig::scramble_seed));
        f.push_back(number_field("data.split_seed", &RunConfig::split_seed));

        f.push_back(nested_number("train.epochs", &RunConfig::train, &TrainOptions::epochs));
        f.push_back(nested_number("train.batch_size", &RunConfig::train, &TrainOptions::batch_size));
        f.push_back(nested_number("train.lr", &RunConfig::train, &TrainOptions::lr));
        f.push_back(nested_number("train.momentum", &RunConfig::train, &TrainOptions::momentum));
        f.push_back(nested_number("train.switch_fraction", &RunConfig::train, &TrainOptions::switch_fraction));
        f.push_back(nested_bool("train.stop_bound_grad", &RunConfig::train, &TrainOptions::stop_bound_grad));
        f.push_back(nested_number("train.clip_norm", &RunConfig::train, &TrainOptions::clip_norm));
        f.push_back(nested_bool("train.cosine_lr", &RunConfig::train, &TrainOptions::cosine_lr));

        f.push_back(nested_number("loss.gamma", &RunConfig::loss, &LossConfig::gamma));
        f.push_back(nested_number("loss.omega", &RunConfig::loss, &LossConfig::omega));
        f.push_back(nested_number("loss.z", &RunConfig::loss, &LossConfig::z));
        f.push_back(nested_number("loss.v_init", &RunConfig::loss, &LossConfig::v_init));
        f.push_back(nested_bool("loss.train_v", &RunConfig::loss, &LossConfig::train_v));
        f.push_back(nested_number("loss.penalty_weight", &RunConfig::loss, &LossConfig::penalty_weight));
        f.push_back(nested_bool("loss.adversarial", &RunConfig::loss, &LossConfig::adversarial));
        f.push_back(nested_number("loss.adv_epsilon", &RunConfig::loss, &LossConfig::adv_epsilon));
        f.push_back(nested_number("loss.adv_steps", &RunConfig::loss, &LossConfig::adv_steps));

        f.push_back(nested_number("attack.epsilon", &RunConfig::attack, &AttackConfig::epsilon));
        f.push_back(nested_number("attack.steps", &RunConfig::attack, &AttackConfig::steps));
        f.push_back(nested_number("attack.step_size", &RunConfig::attack, &AttackConfig::step_size));
        f.push_back(nested_number("attack.restarts", &RunConfig::attack, &AttackConfig::restarts));
        f.push_back(nested_number("attack.seed", &RunConfig::attack, &AttackConfig::seed));
        f.push_back({"attack.ladder", [](RunConfig& c, std::string_view v) { c.ladder = parse_list<int>("attack.ladder", v); },
                     [](const RunConfig& c) { return join(c.ladder); }});
        f.push_back(number_field("attack.samples", &RunConfig::attack_samples));
        f.push_back(number_field("attack.search_eps_max", &RunConfig::search_eps_max));

        f.push_back(number_field("bins.count", &RunConfig::bins));
        f.push_back(number_field("hybrid.threshold", &RunConfig::hybrid_threshold));
        f.push_back({"scramble.fractions",
                     [](RunConfig& c, std::string_view v) { c.scramble_fractions = parse_list<double>("scramble.fractions", v); },
                     [](const RunConfig& c) { return join(c.scramble_fractions); }});
        f.push_back({"ablate.variants",
                     [](RunConfig& c, std::string_view v) { c.ablations = parse_list<std::string>("ablate.variants", v); },
                     [](const RunConfig& c) { return join(c.ablations); }});

        f.push_back(number_field("baseline.epochs", &RunConfig::baseline_epochs));
        f.push_back(number_field("baseline.lr", &RunConfig::baseline_lr));
        f.push_back(number_field("baseline.weight_decay", &RunConfig::baseline_weight_decay));
        f.push_back(number_field("baseline.dropout", &RunConfig::baseline_dropout));
        f.push_back({"baseline.early_stopping",
                     [](RunConfig& c, std::string_view v) { c.baseline_early_stopping = parse_bool("baseline.early_stopping", v); },
                     [](const RunConfig& c) { return std::string(c.baseline_early_stopping ? "true" : "false"); }});
        f.push_back(number_field("baseline.patience", &RunConfig::baseline_patience));
        f.push_back(number_field("baseline.holdout", &RunConfig::baseline_holdout));

        f.push_back(number_field("seed", &RunConfig::seed));
        f.push_back({"out", [](RunConfig& c, std::string_view v) { c.out = std::string(v); },
                     [](const RunConfig& c) { return c.out.string(); }});
        return f;
    }();
    return table;
}

}  // namespace

RunConfig::RunConfig() : arch(default_arch().to_string()) {
    // Desk-scale MNIST recipe: the sign-matrix curvature of the penalty makes
    // plain momentum SGD unstable without clipping above lr ~ 0.01.
    train.epochs = 30;
    train.batch_size = 16;
    train.lr = 0.02;
    train.clip_norm = 2.0;
    train.cosine_lr = true;
    // With v free, random labels let the model shrink v and buy L_c gap with
    // a constant bias offset; pinning v closes that escape.
    loss.train_v = false;
    loss.omega = 0.3;
    attack.epsilon = 1.5;
    attack.steps = 200;
}

void RunConfig::validate() const {
    auto wrap = [](const char* key, auto&& fn) {
        try {
            fn();
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: '") + key + "': " + e.what());
        }
    };
    wrap("arch", [&] { ArchSpec::parse(arch); });
    wrap("train", [&] { train.validate(); });
    wrap("loss", [&] { loss.validate(); });
    // epsilon 0 is allowed here: it asks for natural accuracy only.
    if (attack.epsilon < 0.0) throw ConfigError("config: 'attack.epsilon' must be >= 0");
    wrap("attack", [&] {
        AttackConfig a = attack;
        if (a.epsilon == 0.0) a.epsilon = 1.0;
        a.validate();
    });
    if (scramble_fraction < 0.0 || scramble_fraction > 1.0)
        throw ConfigError("config: 'data.scramble_fraction' must lie in [0, 1]");
    for (double f : scramble_fractions)
        if (f < 0.0 || f > 1.0) throw ConfigError("config: 'scramble.fractions' entries must lie in [0, 1]");
    for (std::size_t i = 0; i < ladder.size(); ++i)
        if (ladder[i] < 0 || (i && ladder[i] <= ladder[i - 1]))
            throw ConfigError("config: 'attack.ladder' must be ascending and non-negative");
    if (bins < 2) throw ConfigError("config: 'bins.count' must be >= 2");
    if (baseline_dropout < 0.0 || baseline_dropout >= 1.0) throw ConfigError("config: 'baseline.dropout' must lie in [0, 1)");
    if (!(search_eps_max > 0.0)) throw ConfigError("config: 'attack.search_eps_max' must be > 0");
}

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
    key = trim(key);
    value = trim(value);
    for (const auto& f : fields()) {
        if (f.key == key) {
            f.set(cfg, value);
            return;
        }
    }
    throw ConfigError("config: unknown key '" + std::string(key) + "'");
}

RunConfig parse_config(std::string_view text, RunConfig base) {
    bool saw_version = false;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        auto line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config: line " + std::to_string(line_no) + ": expected key = value, got '" + std::string(line) + "'");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        if (key == "version") {
            const int v = parse_number<int>(key, value);
            if (v != kConfigVersion)
                throw ConfigError("config: unsupported version " + std::to_string(v) + " (this build reads " +
                                  std::to_string(kConfigVersion) + ")");
            saw_version = true;
            continue;
        }
        apply_setting(base, key, value);
    }
    if (!saw_version) throw ConfigError("config: missing 'version' line");
    base.validate();
    return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
    std::ifstream in(path);
    if (!in) throw std::ios_base::failure("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

std::string to_text(const RunConfig& cfg) {
    std::string out = "version = " + std::to_string(kConfigVersion) + "\n";
    for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
    return out;
}

std::vector<std::string> config_keys() {
    std::vector<std::string> keys{"version"};
    for (const auto& f : fields()) keys.push_back(f.key);
    return keys;
}

}  // namespace l2nnn
