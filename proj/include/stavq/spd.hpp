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
#include <vector>

#include "stavq/config.hpp"
#include "stavq/nn.hpp"
#include "stavq/rng.hpp"
#include "stavq/types.hpp"

namespace stavq {

struct MaskSpan {
    int start = 0;
    int len = 0;
};

// Dual-axis span mask over a T x D matrix: a position (t, d) is masked iff t
// falls inside any temporal span or d falls inside any feature span. Spans
// may overlap; the masked area is their union.
struct MaskPlan {
    std::vector<MaskSpan> temporal_spans;
    std::vector<MaskSpan> feature_spans;
    bool temporal_active = false;
    bool feature_active = false;

    bool empty() const { return temporal_spans.empty() && feature_spans.empty(); }
};

// Each axis activates independently with its configured probability; an
// active axis draws num_spans starts uniformly from [0, axis_len - span_len]
// (span_len clamped to the axis length). Draw order is fixed: temporal
// activation, temporal spans, feature activation, feature spans.
MaskPlan sample_mask_plan(int t_len, int d_len, const MaskConfig& cfg, Rng& rng);

// Zero-fills masked positions; the input is left untouched.
Mat apply_mask(const Mat& e, const MaskPlan& plan);
FeatureSequence apply_mask(const FeatureSequence& e, const MaskPlan& plan);

// Token classifier: a ContextMap whose output width is the vocabulary. The
// activations double as logits; tanh is monotone per coordinate, so argmax
// ranking is unaffected.
using SpdParams = ContextMap;

SpdParams spd_create(int feature_dim, int vocab, int context_radius);
Mat spd_forward(const Mat& e_masked, const SpdParams& params);

struct CrossEntropyResult {
    double loss = 0.0;
    Mat grad_logits;  // (softmax - onehot) / T
};

// Mean over frames of -log softmax(logits_t)[target_t], with the matching
// logit gradient.
CrossEntropyResult cross_entropy(const Mat& logits, const TokenSequence& targets);

// Per-frame argmax, ties to the lowest index; vocab = logits.cols.
TokenSequence predict_tokens(const Mat& logits);

}  // namespace stavq
