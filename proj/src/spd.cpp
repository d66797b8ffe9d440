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

#include "stavq/spd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stavq {

namespace {

void sample_axis(std::vector<MaskSpan>& spans, bool& active, int axis_len,
                 const MaskAxisConfig& cfg, Rng& rng) {
    active = rng.uniform() < cfg.prob;
    if (!active) return;
    const int len = std::min(cfg.span_len, axis_len);
    for (int s = 0; s < cfg.num_spans; ++s) {
        const int start =
            static_cast<int>(rng.uniform_int(static_cast<uint64_t>(axis_len - len + 1)));
        spans.push_back(MaskSpan{start, len});
    }
}

}  // namespace

MaskPlan sample_mask_plan(int t_len, int d_len, const MaskConfig& cfg, Rng& rng) {
    if (t_len < 1 || d_len < 1)
        throw std::invalid_argument("sample_mask_plan: axis lengths must be >= 1");
    MaskPlan plan;
    sample_axis(plan.temporal_spans, plan.temporal_active, t_len, cfg.temporal, rng);
    sample_axis(plan.feature_spans, plan.feature_active, d_len, cfg.feature, rng);
    return plan;
}

Mat apply_mask(const Mat& e, const MaskPlan& plan) {
    for (const auto& s : plan.temporal_spans) {
        if (s.start < 0 || s.len < 1 || s.start + s.len > e.rows)
            throw std::invalid_argument("apply_mask: temporal span out of bounds");
    }
    for (const auto& s : plan.feature_spans) {
        if (s.start < 0 || s.len < 1 || s.start + s.len > e.cols)
            throw std::invalid_argument("apply_mask: feature span out of bounds");
    }
    Mat out = e;
    for (const auto& s : plan.temporal_spans) {
        for (int t = s.start; t < s.start + s.len; ++t) {
            double* row = out.row(t);
            std::fill(row, row + out.cols, 0.0);
        }
    }
    for (const auto& s : plan.feature_spans) {
        for (int t = 0; t < out.rows; ++t) {
            double* row = out.row(t);
            std::fill(row + s.start, row + s.start + s.len, 0.0);
        }
    }
    return out;
}

FeatureSequence apply_mask(const FeatureSequence& e, const MaskPlan& plan) {
    return FeatureSequence{apply_mask(e.frames, plan)};
}

SpdParams spd_create(int feature_dim, int vocab, int context_radius) {
    return ContextMap::create(feature_dim, vocab, context_radius);
}

Mat spd_forward(const Mat& e_masked, const SpdParams& params) {
    return context_map_forward(params, e_masked);
}

CrossEntropyResult cross_entropy(const Mat& logits, const TokenSequence& targets) {
    if (static_cast<int>(targets.size()) != logits.rows)
        throw std::invalid_argument("cross_entropy: target length " +
                                    std::to_string(targets.size()) + " does not match T=" +
                                    std::to_string(logits.rows));
    const int v = logits.cols;
    for (uint32_t tok : targets.tokens) {
        if (tok >= static_cast<uint32_t>(v))
            throw std::invalid_argument("cross_entropy: target " + std::to_string(tok) +
                                        " out of range for V=" + std::to_string(v));
    }
    const int t_len = logits.rows;
    CrossEntropyResult res;
    res.grad_logits = Mat(t_len, v);
    double loss = 0.0;
    for (int t = 0; t < t_len; ++t) {
        const double* row = logits.row(t);
        double m = row[0];
        for (int i = 1; i < v; ++i) m = std::max(m, row[i]);
        double denom = 0.0;
        for (int i = 0; i < v; ++i) denom += std::exp(row[i] - m);
        const double lse = m + std::log(denom);
        loss += lse - row[targets.tokens[t]];
        double* grow = res.grad_logits.row(t);
        const double inv_t = 1.0 / t_len;
        for (int i = 0; i < v; ++i) grow[i] = std::exp(row[i] - lse) * inv_t;
        grow[targets.tokens[t]] -= inv_t;
    }
    res.loss = loss / t_len;
    return res;
}

TokenSequence predict_tokens(const Mat& logits) {
    TokenSequence seq;
    seq.vocab = static_cast<uint32_t>(logits.cols);
    seq.tokens.reserve(logits.rows);
    for (int t = 0; t < logits.rows; ++t) {
        const double* row = logits.row(t);
        int best = 0;
        for (int i = 1; i < logits.cols; ++i)
            if (row[i] > row[best]) best = i;
        seq.tokens.push_back(static_cast<uint32_t>(best));
    }
    return seq;
}

}  // namespace stavq
