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

#include "stavq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stavq {

UtilizationAccumulator::UtilizationAccumulator(int num_layers, int k) : k_(k) {
    if (num_layers < 1 || k < 1)
        throw std::invalid_argument("UtilizationAccumulator: num_layers and K must be >= 1");
    hist_.assign(num_layers, std::vector<uint64_t>(k, 0));
}

void UtilizationAccumulator::add(const std::vector<std::vector<uint32_t>>& codes) {
    if (codes.size() != hist_.size())
        throw std::invalid_argument("utilization: expected " + std::to_string(hist_.size()) +
                                    " layers, got " + std::to_string(codes.size()));
    const size_t t_len = codes.empty() ? 0 : codes[0].size();
    for (size_t i = 0; i < codes.size(); ++i) {
        if (codes[i].size() != t_len)
            throw std::invalid_argument("utilization: layer stream length mismatch");
        for (uint32_t c : codes[i]) {
            if (c >= static_cast<uint32_t>(k_))
                throw std::invalid_argument("utilization: code " + std::to_string(c) +
                                            " out of range for K=" + std::to_string(k_));
            hist_[i][c]++;
        }
    }
    num_utterances_ += 1;
    total_frames_ += t_len;
}

void UtilizationAccumulator::merge(const UtilizationAccumulator& other) {
    if (other.k_ != k_ || other.hist_.size() != hist_.size())
        throw std::invalid_argument("utilization: incompatible accumulators");
    for (size_t i = 0; i < hist_.size(); ++i)
        for (int c = 0; c < k_; ++c) hist_[i][c] += other.hist_[i][c];
    num_utterances_ += other.num_utterances_;
    total_frames_ += other.total_frames_;
}

UtilizationReport UtilizationAccumulator::report() const {
    UtilizationReport rep;
    rep.k = k_;
    rep.num_utterances = num_utterances_;
    rep.total_frames = total_frames_;
    for (const auto& hist : hist_) {
        LayerUtilization layer;
        layer.histogram = hist;
        uint64_t total = 0;
        for (uint64_t c : hist) {
            if (c > 0) layer.used_count++;
            total += c;
        }
        layer.utilization = static_cast<double>(layer.used_count) / k_;
        double entropy = 0.0;
        if (total > 0) {
            for (uint64_t c : hist) {
                if (c == 0) continue;  // 0 * log 0 := 0
                const double p = static_cast<double>(c) / static_cast<double>(total);
                entropy -= p * std::log2(p);
            }
        }
        layer.entropy_bits = entropy;
        rep.layers.push_back(std::move(layer));
    }
    return rep;
}

UtilizationReport codebook_utilization(
    const std::vector<std::vector<std::vector<uint32_t>>>& codes_per_utterance, int k) {
    if (codes_per_utterance.empty())
        throw std::invalid_argument("codebook_utilization: empty corpus");
    UtilizationAccumulator acc(static_cast<int>(codes_per_utterance.front().size()), k);
    for (const auto& codes : codes_per_utterance) acc.add(codes);
    return acc.report();
}

double token_accuracy(const TokenSequence& pred, const TokenSequence& gt) {
    if (pred.size() != gt.size())
        throw std::invalid_argument("token_accuracy: length mismatch (" +
                                    std::to_string(pred.size()) + " vs " +
                                    std::to_string(gt.size()) + ")");
    if (pred.tokens.empty()) throw std::invalid_argument("token_accuracy: empty sequences");
    size_t hits = 0;
    for (size_t i = 0; i < pred.tokens.size(); ++i)
        if (pred.tokens[i] == gt.tokens[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.tokens.size());
}

double reconstruction_mse(const Mat& xhat, const Mat& x) {
    if (!xhat.same_shape(x)) throw std::invalid_argument("reconstruction_mse: shape mismatch");
    if (x.size() == 0) throw std::invalid_argument("reconstruction_mse: empty input");
    double acc = 0.0;
    for (size_t i = 0; i < x.data.size(); ++i) {
        const double d = xhat.data[i] - x.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(x.data.size());
}

nlohmann::ordered_json utilization_report_json(const UtilizationReport& report) {
    nlohmann::ordered_json j;
    j["k"] = report.k;
    j["num_utterances"] = report.num_utterances;
    j["total_frames"] = report.total_frames;
    j["layers"] = nlohmann::ordered_json::array();
    for (size_t i = 0; i < report.layers.size(); ++i) {
        const auto& layer = report.layers[i];
        nlohmann::ordered_json lj;
        lj["layer"] = i + 1;
        lj["used_count"] = layer.used_count;
        lj["utilization"] = layer.utilization;
        lj["entropy_bits"] = layer.entropy_bits;
        lj["histogram"] = layer.histogram;
        j["layers"].push_back(std::move(lj));
    }
    return j;
}

nlohmann::ordered_json utilization_compare(
    const std::vector<std::pair<std::string, UtilizationReport>>& reports) {
    if (reports.empty()) throw std::invalid_argument("utilization_compare: no reports");
    const int k = reports.front().second.k;
    const size_t layers = reports.front().second.layers.size();
    for (const auto& [name, rep] : reports) {
        if (rep.k != k || rep.layers.size() != layers)
            throw std::invalid_argument("utilization_compare: report '" + name +
                                        "' has incompatible K or layer count");
    }
    nlohmann::ordered_json j;
    j["k"] = k;
    j["num_layers"] = layers;
    j["columns"] = nlohmann::ordered_json::array();
    for (const auto& [name, rep] : reports) j["columns"].push_back(name);
    j["per_layer_utilization"] = nlohmann::ordered_json::array();
    for (size_t i = 0; i < layers; ++i) {
        nlohmann::ordered_json row;
        row["layer"] = i + 1;
        for (const auto& [name, rep] : reports) row[name] = rep.layers[i].utilization;
        j["per_layer_utilization"].push_back(std::move(row));
    }
    nlohmann::ordered_json mins;
    for (const auto& [name, rep] : reports) {
        double m = rep.layers.front().utilization;
        for (const auto& layer : rep.layers) m = std::min(m, layer.utilization);
        mins[name] = m;
    }
    j["min_over_layers"] = std::move(mins);
    return j;
}

}  // namespace stavq
