// Copyright 2026-present the stavq project
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

#include "stavq/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "stavq/rng.hpp"

namespace stavq {

std::vector<std::string> validate_config(const ModelConfig& cfg) {
    std::vector<std::string> errs;
    auto bad = [&](const std::string& msg) { errs.push_back(msg); };

    if (cfg.d_in < 1) bad("d_in: must be >= 1");
    if (cfg.d < 1) bad("d: must be >= 1");
    if (cfg.n_q < 1) bad("n_q: must be >= 1");
    if (cfg.k < 1) bad("k: must be >= 1");
    if (cfg.v < 1) bad("v: must be >= 1");
    if (cfg.toggles.sta && cfg.v > cfg.k)
        bad("v: V <= K violated when sta is on (v=" + std::to_string(cfg.v) +
            ", k=" + std::to_string(cfg.k) + ")");
    if (cfg.lambda_spd < 0.0) bad("lambda_spd: must be >= 0");
    if (!(cfg.stage1_steps < cfg.optimizer.total_steps))
        bad("stage1_steps: must be < optimizer.total_steps");
    if (cfg.stage1_steps < 0) bad("stage1_steps: must be >= 0");

    auto check_axis = [&](const MaskAxisConfig& ax, const std::string& name) {
        if (ax.prob < 0.0 || ax.prob > 1.0) bad("mask." + name + ".prob: must be in [0, 1]");
        if (ax.span_len < 1) bad("mask." + name + ".span_len: must be >= 1");
        if (ax.num_spans < 0) bad("mask." + name + ".num_spans: must be >= 0");
    };
    check_axis(cfg.mask.temporal, "temporal");
    check_axis(cfg.mask.feature, "feature");

    if (cfg.optimizer.base_lr < 0.0) bad("optimizer.base_lr: must be >= 0");
    if (cfg.optimizer.warmup_steps < 0) bad("optimizer.warmup_steps: must be >= 0");
    if (!(cfg.optimizer.warmup_steps < cfg.optimizer.total_steps))
        bad("optimizer.warmup_steps: must be < optimizer.total_steps");
    if (cfg.optimizer.total_steps < 1) bad("optimizer.total_steps: must be >= 1");
    if (cfg.optimizer.beta1 < 0.0 || cfg.optimizer.beta1 >= 1.0)
        bad("optimizer.beta1: must be in [0, 1)");
    if (cfg.optimizer.beta2 < 0.0 || cfg.optimizer.beta2 >= 1.0)
        bad("optimizer.beta2: must be in [0, 1)");

    if (cfg.segment_len < 1) bad("segment_len: must be >= 1");
    if (cfg.batch_size < 1) bad("batch_size: must be >= 1");
    if (cfg.checkpoint_every < 0) bad("checkpoint_every: must be >= 0");
    if (cfg.spd_context_radius < 0) bad("spd_context_radius: must be >= 0");
    if (cfg.commitment_weight < 0.0) bad("commitment_weight: must be >= 0");
    if (cfg.dead_entry_steps < 1) bad("dead_entry_steps: must be >= 1");

    return errs;
}

void require_valid(const ModelConfig& cfg) {
    const auto errs = validate_config(cfg);
    if (errs.empty()) return;
    std::string msg = "invalid config:";
    for (const auto& e : errs) msg += "\n  " + e;
    throw std::invalid_argument(msg);
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& val) {
    try {
        size_t pos = 0;
        double d = std::stod(val, &pos);
        if (pos != val.size()) throw std::invalid_argument("trailing characters");
        return d;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': bad number '" + val + "'");
    }
}

int64_t parse_int(const std::string& key, const std::string& val) {
    int64_t out = 0;
    auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), out);
    if (ec != std::errc() || ptr != val.data() + val.size())
        throw std::invalid_argument("config key '" + key + "': bad integer '" + val + "'");
    return out;
}

uint64_t parse_u64(const std::string& key, const std::string& val) {
    uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(val.data(), val.data() + val.size(), out);
    if (ec != std::errc() || ptr != val.data() + val.size())
        throw std::invalid_argument("config key '" + key + "': bad integer '" + val + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& val) {
    if (val == "true" || val == "1" || val == "on" || val == "yes") return true;
    if (val == "false" || val == "0" || val == "off" || val == "no") return false;
    throw std::invalid_argument("config key '" + key + "': bad bool '" + val + "'");
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

ModelConfig parse_config(const std::string& text) {
    ModelConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(lineno) +
                                            ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        const std::string full = section.empty() ? key : section + "." + key;

        if (full == "d_in") cfg.d_in = static_cast<int>(parse_int(full, val));
        else if (full == "d") cfg.d = static_cast<int>(parse_int(full, val));
        else if (full == "n_q") cfg.n_q = static_cast<int>(parse_int(full, val));
        else if (full == "k") cfg.k = static_cast<int>(parse_int(full, val));
        else if (full == "v") cfg.v = static_cast<int>(parse_int(full, val));
        else if (full == "lambda_spd") cfg.lambda_spd = parse_double(full, val);
        else if (full == "seed") cfg.seed = parse_u64(full, val);
        else if (full == "segment_len") cfg.segment_len = static_cast<int>(parse_int(full, val));
        else if (full == "batch_size") cfg.batch_size = static_cast<int>(parse_int(full, val));
        else if (full == "checkpoint_every") cfg.checkpoint_every = parse_int(full, val);
        else if (full == "spd_context_radius")
            cfg.spd_context_radius = static_cast<int>(parse_int(full, val));
        else if (full == "spd_grad_to_encoder") cfg.spd_grad_to_encoder = parse_bool(full, val);
        else if (full == "commitment_weight") cfg.commitment_weight = parse_double(full, val);
        else if (full == "dead_entry_steps")
            cfg.dead_entry_steps = static_cast<int>(parse_int(full, val));
        else if (full == "stage1_steps") cfg.stage1_steps = parse_int(full, val);
        else if (full == "mask.temporal_prob") cfg.mask.temporal.prob = parse_double(full, val);
        else if (full == "mask.temporal_spans")
            cfg.mask.temporal.num_spans = static_cast<int>(parse_int(full, val));
        else if (full == "mask.temporal_span_len")
            cfg.mask.temporal.span_len = static_cast<int>(parse_int(full, val));
        else if (full == "mask.feature_prob") cfg.mask.feature.prob = parse_double(full, val);
        else if (full == "mask.feature_spans")
            cfg.mask.feature.num_spans = static_cast<int>(parse_int(full, val));
        else if (full == "mask.feature_span_len")
            cfg.mask.feature.span_len = static_cast<int>(parse_int(full, val));
        else if (full == "optimizer.base_lr") cfg.optimizer.base_lr = parse_double(full, val);
        else if (full == "optimizer.warmup_steps") cfg.optimizer.warmup_steps = parse_int(full, val);
        else if (full == "optimizer.total_steps") cfg.optimizer.total_steps = parse_int(full, val);
        else if (full == "optimizer.beta1") cfg.optimizer.beta1 = parse_double(full, val);
        else if (full == "optimizer.beta2") cfg.optimizer.beta2 = parse_double(full, val);
        else if (full == "toggles.sta") cfg.toggles.sta = parse_bool(full, val);
        else if (full == "toggles.bt") cfg.toggles.bt = parse_bool(full, val);
        else if (full == "toggles.tc") cfg.toggles.tc = parse_bool(full, val);
        else if (full == "toggles.mask") cfg.toggles.mask = parse_bool(full, val);
        else throw std::invalid_argument("config line " + std::to_string(lineno) +
                                         ": unknown key '" + full + "'");
    }
    return cfg;
}

std::string format_config(const ModelConfig& cfg) {
    std::ostringstream out;
    out << "d_in = " << cfg.d_in << "\n";
    out << "d = " << cfg.d << "\n";
    out << "n_q = " << cfg.n_q << "\n";
    out << "k = " << cfg.k << "\n";
    out << "v = " << cfg.v << "\n";
    out << "lambda_spd = " << fmt_double(cfg.lambda_spd) << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "segment_len = " << cfg.segment_len << "\n";
    out << "batch_size = " << cfg.batch_size << "\n";
    out << "checkpoint_every = " << cfg.checkpoint_every << "\n";
    out << "spd_context_radius = " << cfg.spd_context_radius << "\n";
    out << "spd_grad_to_encoder = " << (cfg.spd_grad_to_encoder ? "true" : "false") << "\n";
    out << "commitment_weight = " << fmt_double(cfg.commitment_weight) << "\n";
    out << "dead_entry_steps = " << cfg.dead_entry_steps << "\n";
    out << "stage1_steps = " << cfg.stage1_steps << "\n";
    out << "\n[mask]\n";
    out << "temporal_prob = " << fmt_double(cfg.mask.temporal.prob) << "\n";
    out << "temporal_spans = " << cfg.mask.temporal.num_spans << "\n";
    out << "temporal_span_len = " << cfg.mask.temporal.span_len << "\n";
    out << "feature_prob = " << fmt_double(cfg.mask.feature.prob) << "\n";
    out << "feature_spans = " << cfg.mask.feature.num_spans << "\n";
    out << "feature_span_len = " << cfg.mask.feature.span_len << "\n";
    out << "\n[optimizer]\n";
    out << "base_lr = " << fmt_double(cfg.optimizer.base_lr) << "\n";
    out << "warmup_steps = " << cfg.optimizer.warmup_steps << "\n";
    out << "total_steps = " << cfg.optimizer.total_steps << "\n";
    out << "beta1 = " << fmt_double(cfg.optimizer.beta1) << "\n";
    out << "beta2 = " << fmt_double(cfg.optimizer.beta2) << "\n";
    out << "\n[toggles]\n";
    out << "sta = " << (cfg.toggles.sta ? "true" : "false") << "\n";
    out << "bt = " << (cfg.toggles.bt ? "true" : "false") << "\n";
    out << "tc = " << (cfg.toggles.tc ? "true" : "false") << "\n";
    out << "mask = " << (cfg.toggles.mask ? "true" : "false") << "\n";
    return out.str();
}

ModelConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open config file");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_config(buf.str());
    } catch (const std::exception& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

void save_config(const ModelConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << format_config(cfg);
    if (!out) throw std::runtime_error(path + ": write failed");
}

uint64_t config_hash(const ModelConfig& cfg) { return fnv1a64(format_config(cfg)); }

}  // namespace stavq
