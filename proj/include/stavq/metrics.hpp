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

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stavq/mat.hpp"
#include "stavq/types.hpp"

namespace stavq {

struct LayerUtilization {
    int used_count = 0;        // distinct codes observed
    double utilization = 0.0;  // used_count / K
    std::vector<uint64_t> histogram;
    double entropy_bits = 0.0;
};

struct UtilizationReport {
    int k = 0;
    std::vector<LayerUtilization> layers;
    uint64_t num_utterances = 0;
    uint64_t total_frames = 0;
};

// Accumulates per-layer code histograms over a corpus. Counting is
// associative, so partial accumulators can be merged.
class UtilizationAccumulator {
public:
    UtilizationAccumulator(int num_layers, int k);

    // codes: [n_q][t] streams of one utterance.
    void add(const std::vector<std::vector<uint32_t>>& codes);
    void merge(const UtilizationAccumulator& other);

    UtilizationReport report() const;

private:
    int k_;
    std::vector<std::vector<uint64_t>> hist_;  // [layer][code]
    uint64_t num_utterances_ = 0;
    uint64_t total_frames_ = 0;
};

// One-shot helper over a whole corpus of code matrices.
UtilizationReport codebook_utilization(
    const std::vector<std::vector<std::vector<uint32_t>>>& codes_per_utterance, int k);

// Fraction of frames where pred and gt agree.
double token_accuracy(const TokenSequence& pred, const TokenSequence& gt);

// Mean over all T*D elements of the squared difference.
double reconstruction_mse(const Mat& xhat, const Mat& x);

nlohmann::ordered_json utilization_report_json(const UtilizationReport& report);

// Side-by-side per-layer utilization for reports sharing K and layer count,
// plus a min-over-layers summary per column.
nlohmann::ordered_json utilization_compare(
    const std::vector<std::pair<std::string, UtilizationReport>>& reports);

}  // namespace stavq
