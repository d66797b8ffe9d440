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

#include <doctest.h>

#include <cmath>

#include "stavq/spd.hpp"
#include "test_helpers.hpp"

using namespace stavq;
using stavq::test::random_mat;

namespace {

MaskConfig mask_cfg(double tprob, int tspans, int tlen, double fprob, int fspans, int flen) {
    MaskConfig cfg;
    cfg.temporal = {tprob, tspans, tlen};
    cfg.feature = {fprob, fspans, flen};
    return cfg;
}

// Test-local union size of temporal spans, by direct enumeration.
int union_size(const std::vector<MaskSpan>& spans, int axis_len) {
    std::vector<bool> hit(axis_len, false);
    for (const auto& s : spans)
        for (int i = s.start; i < s.start + s.len; ++i) hit[i] = true;
    int n = 0;
    for (bool b : hit) n += b;
    return n;
}

}  // namespace

TEST_CASE("zero probabilities give an empty inactive plan") {
    Rng rng(1);
    const MaskPlan plan = sample_mask_plan(150, 128, mask_cfg(0, 2, 10, 0, 2, 8), rng);
    CHECK_FALSE(plan.temporal_active);
    CHECK_FALSE(plan.feature_active);
    CHECK(plan.empty());
}

TEST_CASE("probability one with the default geometry gives 2x10 and 2x8 spans") {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const MaskPlan plan = sample_mask_plan(150, 128, mask_cfg(1, 2, 10, 1, 2, 8), rng);
        REQUIRE(plan.temporal_active);
        REQUIRE(plan.feature_active);
        REQUIRE(plan.temporal_spans.size() == 2);
        REQUIRE(plan.feature_spans.size() == 2);
        for (const auto& s : plan.temporal_spans) {
            CHECK(s.len == 10);
            CHECK(s.start >= 0);
            CHECK(s.start + s.len <= 150);
        }
        for (const auto& s : plan.feature_spans) {
            CHECK(s.len == 8);
            CHECK(s.start >= 0);
            CHECK(s.start + s.len <= 128);
        }
    }
}

TEST_CASE("span length clamps to short axes") {
    Rng rng(3);
    const MaskPlan plan = sample_mask_plan(4, 3, mask_cfg(1, 2, 10, 1, 1, 8), rng);
    for (const auto& s : plan.temporal_spans) {
        CHECK(s.len == 4);
        CHECK(s.start == 0);
    }
    for (const auto& s : plan.feature_spans) {
        CHECK(s.len == 3);
        CHECK(s.start == 0);
    }
}

TEST_CASE("per-axis activation rate over 10000 draws sits near one half") {
    Rng rng(20260809);
    int t_active = 0, f_active = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        const MaskPlan plan = sample_mask_plan(150, 128, mask_cfg(0.5, 2, 10, 0.5, 2, 8), rng);
        t_active += plan.temporal_active;
        f_active += plan.feature_active;
    }
    CHECK(t_active >= 4800);
    CHECK(t_active <= 5200);
    CHECK(f_active >= 4800);
    CHECK(f_active <= 5200);
}

TEST_CASE("masked temporal frame count matches an independent Monte-Carlo oracle") {
    // Conditioned on activation: E|union of 2 uniform spans of 10 in 150|.
    const int draws = 50000;
    Rng lib_rng(101);
    double lib_mean = 0.0;
    int lib_n = 0;
    while (lib_n < draws) {
        const MaskPlan plan = sample_mask_plan(150, 128, mask_cfg(1, 2, 10, 0, 2, 8), lib_rng);
        lib_mean += union_size(plan.temporal_spans, 150);
        ++lib_n;
    }
    lib_mean /= lib_n;

    Rng oracle_rng(202);
    double oracle_mean = 0.0;
    for (int i = 0; i < draws; ++i) {
        const int s1 = static_cast<int>(oracle_rng.uniform_int(141));
        const int s2 = static_cast<int>(oracle_rng.uniform_int(141));
        const int overlap = std::max(0, 10 - std::abs(s1 - s2));
        oracle_mean += 20 - overlap;
    }
    oracle_mean /= draws;

    CHECK(std::abs(lib_mean - oracle_mean) < 0.05);
}

TEST_CASE("apply_mask with an empty plan is the identity") {
    Rng rng(4);
    const Mat e = random_mat(6, 5, rng);
    CHECK(apply_mask(e, MaskPlan{}) == e);
}

TEST_CASE("full-axis spans zero everything") {
    Rng rng(5);
    const Mat e = random_mat(7, 3, rng);
    MaskPlan plan;
    plan.temporal_active = plan.feature_active = true;
    plan.temporal_spans = {{0, 7}};
    plan.feature_spans = {{0, 3}};
    const Mat out = apply_mask(e, plan);
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("masked area is the union of row and column spans") {
    // T=4, D=3, temporal span (1,2), feature span (0,1): rows {1,2} and
    // column {0}. Hand enumeration of the 12 positions: rows 1-2 contribute
    // 6 cells, the column contributes 4, their overlap is (1,0) and (2,0),
    // so 8 distinct cells are zeroed and 4 survive.
    Mat e(4, 3);
    for (size_t i = 0; i < e.data.size(); ++i) e.data[i] = 1.0 + static_cast<double>(i);
    MaskPlan plan;
    plan.temporal_active = plan.feature_active = true;
    plan.temporal_spans = {{1, 2}};
    plan.feature_spans = {{0, 1}};
    const Mat out = apply_mask(e, plan);
    int zeroed = 0;
    for (int t = 0; t < 4; ++t) {
        for (int d = 0; d < 3; ++d) {
            const bool in_rows = (t == 1 || t == 2);
            const bool in_col = (d == 0);
            if (in_rows || in_col) {
                CHECK(out.at(t, d) == 0.0);
                ++zeroed;
            } else {
                CHECK(out.at(t, d) == e.at(t, d));
            }
        }
    }
    CHECK(zeroed == 8);
}

TEST_CASE("apply_mask is idempotent and leaves the input untouched") {
    Rng rng(6);
    const Mat e = random_mat(10, 6, rng);
    const Mat e_copy = e;
    MaskPlan plan;
    plan.temporal_active = plan.feature_active = true;
    plan.temporal_spans = {{2, 3}, {4, 2}};  // overlapping spans are allowed
    plan.feature_spans = {{1, 2}};
    const Mat once = apply_mask(e, plan);
    const Mat twice = apply_mask(once, plan);
    CHECK(once == twice);
    CHECK(e == e_copy);
}

TEST_CASE("apply_mask rejects out-of-bounds plans") {
    Mat e(3, 3);
    MaskPlan plan;
    plan.temporal_active = true;
    plan.temporal_spans = {{2, 2}};
    CHECK_THROWS_AS(apply_mask(e, plan), std::invalid_argument);
}

TEST_CASE("spd_forward with zero weights yields all-zero logits") {
    const SpdParams params = spd_create(4, 6, 2);
    Rng rng(7);
    const Mat logits = spd_forward(random_mat(5, 4, rng), params);
    for (double v : logits.data) CHECK(v == 0.0);
}

TEST_CASE("spd_forward on one frame matches the map evaluated by hand") {
    SpdParams params = spd_create(2, 3, 0);
    params.w[0].data = {1.0, 0.5, -1.0, 2.0, 0.25, 0.0};
    params.b.data = {0.1, -0.2, 0.3};
    Mat in(1, 2);
    in.data = {0.4, -0.6};
    const Mat logits = spd_forward(in, params);
    CHECK(logits.at(0, 0) == doctest::Approx(std::tanh(1.0 * 0.4 + 0.5 * -0.6 + 0.1)));
    CHECK(logits.at(0, 1) == doctest::Approx(std::tanh(-1.0 * 0.4 + 2.0 * -0.6 - 0.2)));
    CHECK(logits.at(0, 2) == doctest::Approx(std::tanh(0.25 * 0.4 + 0.0 * -0.6 + 0.3)));
}

TEST_CASE("shifting the input shifts interior logits") {
    Rng rng(8);
    const int t_len = 9, c = 2;
    SpdParams params = spd_create(3, 4, c);
    params.init(rng);
    const Mat x = random_mat(t_len, 3, rng);
    Mat shifted(t_len, 3);
    for (int t = 1; t < t_len; ++t) std::copy_n(x.row(t - 1), 3, shifted.row(t));
    const Mat a = spd_forward(x, params);
    const Mat b = spd_forward(shifted, params);
    // Frames whose windows avoid padding in both sequences.
    for (int t = c + 1; t <= t_len - 1 - c; ++t)
        for (int v = 0; v < 4; ++v) CHECK(b.at(t, v) == a.at(t - 1, v));
}

TEST_CASE("cross_entropy of uniform logits is log V") {
    Mat logits(3, 1024);
    logits.fill(0.7);
    TokenSequence targets{{5, 900, 0}, 1024};
    const auto res = cross_entropy(logits, targets);
    CHECK(res.loss == doctest::Approx(std::log(1024.0)).epsilon(1e-12));
}

TEST_CASE("cross_entropy saturates under a +30 margin") {
    Mat logits(1, 1024);
    logits.fill(0.0);
    logits.at(0, 77) = 30.0;
    const auto res = cross_entropy(logits, TokenSequence{{77}, 1024});
    CHECK(res.loss < 1e-9);
    CHECK(res.loss >= 0.0);
}

TEST_CASE("cross_entropy log-sum-exp hand value") {
    Mat logits(1, 3);
    logits.data = {1.0, 2.0, 3.0};
    const auto res = cross_entropy(logits, TokenSequence{{2}, 3});
    const double expected = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
    CHECK(res.loss == doctest::Approx(expected).epsilon(1e-12));
    CHECK(res.loss == doctest::Approx(0.40760596444438).epsilon(1e-10));
}

TEST_CASE("cross_entropy gradient matches central finite differences") {
    Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        const int t_len = 1 + static_cast<int>(rng.uniform_int(4));
        const int v = 2 + static_cast<int>(rng.uniform_int(7));
        Mat logits = random_mat(t_len, v, rng, -2.0, 2.0);
        TokenSequence targets;
        targets.vocab = static_cast<uint32_t>(v);
        for (int t = 0; t < t_len; ++t)
            targets.tokens.push_back(static_cast<uint32_t>(rng.uniform_int(v)));
        const auto base = cross_entropy(logits, targets);
        const double eps = 1e-6;
        for (size_t i = 0; i < logits.data.size(); ++i) {
            const double saved = logits.data[i];
            logits.data[i] = saved + eps;
            const double up = cross_entropy(logits, targets).loss;
            logits.data[i] = saved - eps;
            const double down = cross_entropy(logits, targets).loss;
            logits.data[i] = saved;
            const double fd = (up - down) / (2 * eps);
            CHECK(std::abs(fd - base.grad_logits.data[i]) /
                      std::max({std::abs(fd), std::abs(base.grad_logits.data[i]), 1e-3}) <
                  1e-6);
        }
    }
}

TEST_CASE("cross_entropy is invariant to a constant shift per row") {
    Rng rng(10);
    Mat logits = random_mat(4, 5, rng);
    TokenSequence targets{{0, 4, 2, 2}, 5};
    const double base = cross_entropy(logits, targets).loss;
    const TokenSequence base_pred = predict_tokens(logits);
    Mat shifted = logits;
    for (int t = 0; t < 4; ++t)
        for (int v = 0; v < 5; ++v) shifted.at(t, v) += 7.5;
    CHECK(cross_entropy(shifted, targets).loss == doctest::Approx(base).epsilon(1e-9));
    CHECK(predict_tokens(shifted).tokens == base_pred.tokens);
}

TEST_CASE("cross_entropy rejects out-of-range targets") {
    Mat logits(1, 3);
    CHECK_THROWS_AS(cross_entropy(logits, TokenSequence{{3}, 4}), std::invalid_argument);
}

TEST_CASE("predict_tokens picks one-hot rows and breaks ties low") {
    Mat logits(3, 4);
    logits.fill(0.0);
    logits.at(0, 2) = 1.0;
    logits.at(1, 3) = 1.0;
    // Row 2 stays all-equal.
    const TokenSequence toks = predict_tokens(logits);
    CHECK(toks.tokens == std::vector<uint32_t>{2, 3, 0});
    CHECK(toks.vocab == 4);
}

TEST_CASE("predict_tokens matches a per-row scan oracle") {
    Rng rng(11);
    const Mat logits = random_mat(50, 9, rng);
    const TokenSequence toks = predict_tokens(logits);
    for (int t = 0; t < 50; ++t) {
        int best = 0;
        for (int v = 1; v < 9; ++v)
            if (logits.at(t, v) > logits.at(t, best)) best = v;
        CHECK(toks.tokens[t] == static_cast<uint32_t>(best));
    }
}
