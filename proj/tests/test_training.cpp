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
#include <fstream>

#include "stavq/training.hpp"
#include "test_helpers.hpp"

using namespace stavq;
using stavq::test::random_mat;

namespace {

ModelConfig toy_config() {
    ModelConfig cfg;
    cfg.d_in = 6;
    cfg.d = 5;
    cfg.n_q = 2;
    cfg.k = 7;
    cfg.v = 6;
    cfg.lambda_spd = 5.0;
    cfg.spd_context_radius = 2;
    cfg.seed = 17;
    cfg.segment_len = 6;
    cfg.batch_size = 2;
    cfg.stage1_steps = 5;
    cfg.optimizer.total_steps = 20;
    cfg.optimizer.warmup_steps = 3;
    cfg.optimizer.base_lr = 1e-2;
    cfg.mask.temporal = {1.0, 1, 2};
    cfg.mask.feature = {1.0, 1, 2};
    return cfg;
}

Batch toy_batch(const ModelConfig& cfg, uint64_t seed, int t_len = 0) {
    if (t_len == 0) t_len = cfg.segment_len;
    Rng rng(seed);
    Batch batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
        Segment seg;
        seg.features = random_mat(t_len, cfg.d_in, rng, -0.8, 0.8);
        seg.tokens.vocab = static_cast<uint32_t>(cfg.v);
        for (int t = 0; t < t_len; ++t)
            seg.tokens.tokens.push_back(static_cast<uint32_t>(rng.uniform_int(cfg.v)));
        batch.push_back(std::move(seg));
    }
    return batch;
}

Corpus toy_corpus(const ModelConfig& cfg, int utterances, int t_len, uint64_t seed) {
    Rng rng(seed);
    Corpus corpus;
    corpus.d_in = cfg.d_in;
    corpus.vocab = static_cast<uint32_t>(cfg.v);
    for (int u = 0; u < utterances; ++u) {
        corpus.features.push_back(FeatureSequence{random_mat(t_len, cfg.d_in, rng, -0.8, 0.8)});
        TokenSequence toks;
        toks.vocab = static_cast<uint32_t>(cfg.v);
        for (int t = 0; t < t_len; ++t)
            toks.tokens.push_back(static_cast<uint32_t>(rng.uniform_int(cfg.v)));
        corpus.tokens.push_back(std::move(toks));
    }
    return corpus;
}

double report_total_recomputed(const ModelConfig& cfg, const StepReport& r) {
    double total = r.recon + r.codebook + cfg.commitment_weight * r.commitment;
    if (r.spd) total += cfg.lambda_spd * *r.spd;
    return total;
}

}  // namespace

TEST_CASE("cosine_lr endpoints and warmup") {
    CHECK(cosine_lr(0, 3e-4, 4000, 250000) == 0.0);
    CHECK(cosine_lr(4000, 3e-4, 4000, 250000) == 3e-4);
    CHECK(cosine_lr(250000, 3e-4, 4000, 250000) == 0.0);
    CHECK(cosine_lr(2000, 3e-4, 4000, 250000) == doctest::Approx(1.5e-4).epsilon(1e-12));
    // Halfway through the decay window the rate is half the base.
    CHECK(cosine_lr(127000, 3e-4, 4000, 250000) == doctest::Approx(1.5e-4).epsilon(1e-9));
    for (int64_t s = 4000; s < 250000; s += 12300)
        CHECK(cosine_lr(s, 3e-4, 4000, 250000) >= cosine_lr(s + 12300, 3e-4, 4000, 250000));
    CHECK_THROWS_AS(cosine_lr(250001, 3e-4, 4000, 250000), std::invalid_argument);
    CHECK_THROWS_AS(cosine_lr(-1, 3e-4, 4000, 250000), std::invalid_argument);
}

TEST_CASE("adam_step hand-checked scalar update") {
    Mat p(1, 1), g(1, 1), m(1, 1), v(1, 1);
    p.data = {2.0};
    g.data = {1.0};
    adam_step({&p}, {&g}, {&m}, {&v}, 1, 0.1, 0.5, 0.9);
    // Bias-corrected mhat/sqrt(vhat) = 1 at the first step.
    CHECK(std::abs(p.data[0] - 1.9) < 1e-8);
}

TEST_CASE("adam_step keeps parameters fixed for zero gradients or zero lr") {
    Rng rng(1);
    Mat p = random_mat(3, 4, rng);
    const Mat orig = p;
    Mat g(3, 4), m(3, 4), v(3, 4);
    adam_step({&p}, {&g}, {&m}, {&v}, 1, 0.1, 0.5, 0.9);
    CHECK(p == orig);

    Mat g2 = random_mat(3, 4, rng);
    adam_step({&p}, {&g2}, {&m}, {&v}, 1, 0.0, 0.5, 0.9);
    CHECK(p == orig);
}

TEST_CASE("adam_step rejects shape mismatch and non-finite gradients") {
    Mat p(2, 2), g(2, 1), m(2, 2), v(2, 2);
    CHECK_THROWS_AS(adam_step({&p}, {&g}, {&m}, {&v}, 1, 0.1, 0.5, 0.9),
                    std::invalid_argument);
    Mat gbad(2, 2);
    gbad.data[3] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(adam_step({&p}, {&gbad}, {&m}, {&v}, 1, 0.1, 0.5, 0.9),
                         doctest::Contains("non-finite"), std::invalid_argument);
}

TEST_CASE("forward in stage 1 uses ground-truth tokens and no classifier") {
    const ModelConfig cfg = toy_config();
    const TrainState state = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 5);
    const SegmentForward f =
        forward(batch[0].features, batch[0].tokens, state, ForwardMode::stage1, MaskPlan{});
    CHECK(f.token_source == TokenSource::ground_truth);
    CHECK(f.quant_tokens.tokens == batch[0].tokens.tokens);
    CHECK_FALSE(f.spd_loss.has_value());
    CHECK(f.logits.size() == 0);
    // STA pins the first-layer codes to the supplied tokens.
    for (size_t t = 0; t < f.quant_tokens.tokens.size(); ++t)
        CHECK(f.q.codes[0][t] == batch[0].tokens.tokens[t]);
}

TEST_CASE("forward in stage 2 quantizes with distilled tokens") {
    const ModelConfig cfg = toy_config();
    TrainState state = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 6);
    Rng mask_rng(3);
    const MaskPlan plan =
        sample_mask_plan(batch[0].features.rows, cfg.d, cfg.mask, mask_rng);
    const SegmentForward f =
        forward(batch[0].features, batch[0].tokens, state, ForwardMode::stage2, plan);
    CHECK(f.token_source == TokenSource::distilled);
    REQUIRE(f.spd_loss.has_value());
    CHECK(*f.spd_loss >= 0.0);
    const TokenSequence expect = predict_tokens(spd_forward(apply_mask(f.e, plan), state.params.spd));
    CHECK(f.quant_tokens.tokens == expect.tokens);
    for (size_t t = 0; t < expect.tokens.size(); ++t)
        CHECK(f.q.codes[0][t] == expect.tokens[t]);
}

TEST_CASE("inference classifies unmasked features") {
    const ModelConfig cfg = toy_config();
    TrainState state = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 7);
    const SegmentForward f =
        forward(batch[0].features, batch[0].tokens, state, ForwardMode::inference, MaskPlan{});
    CHECK(f.token_source == TokenSource::distilled);
    CHECK_FALSE(f.spd_loss.has_value());
    const TokenSequence expect = predict_tokens(spd_forward(f.e, state.params.spd));
    CHECK(f.quant_tokens.tokens == expect.tokens);
}

TEST_CASE("a codebook holding z's rows reduces quantization to the identity") {
    ModelConfig cfg = toy_config();
    cfg.toggles.sta = false;
    cfg.n_q = 1;
    cfg.k = 8;  // >= segment_len so each frame can own an entry
    TrainState state = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 11);
    const SegmentForward probe =
        forward(batch[0].features, batch[0].tokens, state, ForwardMode::stage1, MaskPlan{});
    for (int t = 0; t < probe.z.rows; ++t)
        std::copy_n(probe.z.row(t), cfg.d, state.params.codebooks.layers[0].entries.row(t));
    const SegmentForward f =
        forward(batch[0].features, batch[0].tokens, state, ForwardMode::stage1, MaskPlan{});
    for (double v : f.q.final_residual.data) CHECK(v == 0.0);
    CHECK(f.q.summed == f.z);
    CHECK(f.cb_loss == 0.0);
}

TEST_CASE("straight-through contract: d recon / d z equals d recon / d zhat") {
    const ModelConfig cfg = toy_config();
    TrainState state = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 13);
    const Mat& x = batch[0].features;
    const SegmentForward f = forward(x, batch[0].tokens, state, ForwardMode::stage1, MaskPlan{});

    // Analytic gradient w.r.t. the decoder input (= w.r.t. zhat).
    Mat dxhat(f.xhat.rows, f.xhat.cols);
    for (size_t i = 0; i < dxhat.data.size(); ++i)
        dxhat.data[i] = 2.0 * (f.xhat.data[i] - x.data[i]) / static_cast<double>(x.size());
    ContextMap sink = state.params.codec.decoder.grads_like();
    Mat d_zhat(f.z.rows, f.z.cols);
    context_map_backward(state.params.codec.decoder, f.q.summed, f.xhat, dxhat, sink, &d_zhat);

    // Finite differences of recon w.r.t. z with the codes held fixed:
    // the decoder consumes z + (zhat0 - z0).
    Mat offset(f.z.rows, f.z.cols);
    for (size_t i = 0; i < offset.data.size(); ++i)
        offset.data[i] = f.q.summed.data[i] - f.z.data[i];
    auto recon_of = [&](const Mat& z) {
        Mat dec_in(z.rows, z.cols);
        for (size_t i = 0; i < dec_in.data.size(); ++i)
            dec_in.data[i] = z.data[i] + offset.data[i];
        const Mat xhat = context_map_forward(state.params.codec.decoder, dec_in);
        double acc = 0.0;
        for (size_t i = 0; i < xhat.data.size(); ++i) {
            const double d = xhat.data[i] - x.data[i];
            acc += d * d;
        }
        return acc / static_cast<double>(x.size());
    };
    Mat z = f.z;
    const double eps = 1e-6;
    for (size_t i = 0; i < z.data.size(); ++i) {
        const double saved = z.data[i];
        z.data[i] = saved + eps;
        const double up = recon_of(z);
        z.data[i] = saved - eps;
        const double down = recon_of(z);
        z.data[i] = saved;
        const double fd = (up - down) / (2 * eps);
        CHECK(std::abs(fd - d_zhat.data[i]) /
                  std::max({std::abs(fd), std::abs(d_zhat.data[i]), 1e-3}) < 1e-7);
    }
}

TEST_CASE("step report total decomposes exactly in both stages") {
    const ModelConfig cfg = toy_config();
    TrainState state = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 19);

    const StepReport r1 = backward_and_step(state, batch);
    CHECK(r1.stage == 1);
    CHECK(r1.tokens_used == TokenSource::ground_truth);
    CHECK_FALSE(r1.spd.has_value());
    CHECK(r1.total == report_total_recomputed(cfg, r1));
    CHECK(r1.lr == cosine_lr(0, cfg.optimizer.base_lr, cfg.optimizer.warmup_steps,
                             cfg.optimizer.total_steps));

    state.step = cfg.stage1_steps;
    state.stage = 2;
    const StepReport r2 = backward_and_step(state, batch);
    CHECK(r2.stage == 2);
    CHECK(r2.tokens_used == TokenSource::distilled);
    REQUIRE(r2.spd.has_value());
    CHECK(r2.total == report_total_recomputed(cfg, r2));
    // lambda = 5 contributes exactly 5 * spd to the total.
    CHECK(r2.total - (r2.recon + r2.codebook + cfg.commitment_weight * r2.commitment) ==
          cfg.lambda_spd * *r2.spd);
}

TEST_CASE("tc off freezes the first-layer codebook bit-exactly") {
    ModelConfig cfg = toy_config();
    cfg.toggles.tc = false;
    TrainState state = init_train_state(cfg);
    state.step = 2;  // past the zero-lr start of the warmup ramp
    const Mat layer1_before = state.params.codebooks.layers[0].entries;
    const Mat layer2_before = state.params.codebooks.layers[1].entries;
    backward_and_step(state, toy_batch(cfg, 23));
    CHECK(state.params.codebooks.layers[0].entries == layer1_before);
    CHECK(state.params.codebooks.layers[1].entries != layer2_before);

    // With tc on the first layer moves.
    cfg.toggles.tc = true;
    TrainState state2 = init_train_state(cfg);
    state2.step = 2;
    const Mat l1 = state2.params.codebooks.layers[0].entries;
    backward_and_step(state2, toy_batch(cfg, 23));
    CHECK(state2.params.codebooks.layers[0].entries != l1);
}

TEST_CASE("bt off bypasses the bottleneck") {
    ModelConfig cfg = toy_config();
    cfg.toggles.bt = false;
    TrainState state = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 29);
    const SegmentForward f =
        forward(batch[0].features, batch[0].tokens, state, ForwardMode::stage1, MaskPlan{});
    CHECK(f.z == f.e);
    const Mat bt_before = state.params.codec.bottleneck.w[0];
    backward_and_step(state, batch);
    CHECK(state.params.codec.bottleneck.w[0] == bt_before);
}

TEST_CASE("mask toggle off never consumes mask randomness in stage 2") {
    ModelConfig cfg = toy_config();
    cfg.toggles.mask = false;
    TrainState state = init_train_state(cfg);
    state.step = cfg.stage1_steps;
    state.stage = 2;
    const uint64_t rng_before = state.rng_mask.state;
    const StepReport rep = backward_and_step(state, toy_batch(cfg, 31));
    CHECK(state.rng_mask.state == rng_before);
    REQUIRE(rep.spd.has_value());  // distillation still trains, unmasked

    cfg.toggles.mask = true;
    TrainState state2 = init_train_state(cfg);
    state2.step = cfg.stage1_steps;
    state2.stage = 2;
    const uint64_t before2 = state2.rng_mask.state;
    backward_and_step(state2, toy_batch(cfg, 31));
    CHECK(state2.rng_mask.state != before2);
}

TEST_CASE("two identical steps from the same state agree bit-exactly") {
    const ModelConfig cfg = toy_config();
    TrainState a = init_train_state(cfg);
    TrainState b = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 37);
    for (int s = 0; s < 3; ++s) {
        const StepReport ra = backward_and_step(a, batch);
        const StepReport rb = backward_and_step(b, batch);
        CHECK(ra.total == rb.total);
        CHECK(ra.recon == rb.recon);
    }
    bool same = true;
    visit_params(a.params, [&](const std::string& name, Mat& t) {
        std::vector<std::pair<std::string, Mat*>> refs;
        visit_params(b.params,
                     [&](const std::string& n, Mat& tb) { refs.emplace_back(n, &tb); });
        for (auto& [n, tb] : refs)
            if (n == name && !(*tb == t)) same = false;
    });
    CHECK(same);
}

TEST_CASE("non-finite loss aborts the step with a diagnostic") {
    const ModelConfig cfg = toy_config();
    TrainState state = init_train_state(cfg);
    // In the decoder the NaN reaches the reconstruction loss rather than an
    // input-validation check.
    state.params.codec.decoder.b.data[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(backward_and_step(state, toy_batch(cfg, 41)),
                         doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("unused entries reset to a sampled residual after the dead window") {
    ModelConfig cfg = toy_config();
    cfg.dead_entry_steps = 3;
    cfg.k = 7;
    TrainState state = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 43);

    // Plant entries so far from the data that the nearest-neighbor search can
    // never pick them: layer 2 entry 5 must eventually be reset; layer 1
    // entry 6 is outside the vocabulary (v=6) and exempt under sta. Unused
    // entries receive exactly zero gradient, so any change to them can only
    // come from a dead-entry reset.
    for (int j = 0; j < cfg.d; ++j) {
        state.params.codebooks.layers[1].entries.at(5, j) = 100.0;
        state.params.codebooks.layers[0].entries.at(6, j) = 100.0;
    }

    for (int s = 0; s < cfg.dead_entry_steps - 1; ++s) {
        backward_and_step(state, batch);
        CHECK(state.dead_counters[1][5] == s + 1);
        for (int j = 0; j < cfg.d; ++j)
            CHECK(state.params.codebooks.layers[1].entries.at(5, j) == 100.0);
    }

    backward_and_step(state, batch);
    CHECK(state.dead_counters[1][5] == 0);
    // Reset to an in-range residual: the planted value is gone.
    for (int j = 0; j < cfg.d; ++j)
        CHECK(std::abs(state.params.codebooks.layers[1].entries.at(5, j)) < 50.0);

    // The exempt first layer kept its planted entry and a zero counter.
    for (int j = 0; j < cfg.d; ++j)
        CHECK(state.params.codebooks.layers[0].entries.at(6, j) == 100.0);
    CHECK(state.dead_counters[0][6] == 0);
}

TEST_CASE("gradient check: linear chain without quantizer") {
    // Encoder -> decoder -> MSE only; central differences of a smooth small
    // composition agree to near machine precision.
    const ModelConfig cfg = toy_config();
    Rng rng(47);
    ContextMap enc = ContextMap::create(cfg.d_in, cfg.d, 0);
    ContextMap dec = ContextMap::create(cfg.d, cfg.d_in, 0);
    enc.init(rng);
    dec.init(rng);
    const Mat x = random_mat(5, cfg.d_in, rng, -0.8, 0.8);

    auto loss_of = [&]() {
        const Mat e = context_map_forward(enc, x);
        const Mat xhat = context_map_forward(dec, e);
        double acc = 0.0;
        for (size_t i = 0; i < xhat.data.size(); ++i) {
            const double d = xhat.data[i] - x.data[i];
            acc += d * d;
        }
        return acc / static_cast<double>(x.size());
    };

    const Mat e = context_map_forward(enc, x);
    const Mat xhat = context_map_forward(dec, e);
    Mat dxhat(xhat.rows, xhat.cols);
    for (size_t i = 0; i < dxhat.data.size(); ++i)
        dxhat.data[i] = 2.0 * (xhat.data[i] - x.data[i]) / static_cast<double>(x.size());
    ContextMap g_dec = dec.grads_like();
    ContextMap g_enc = enc.grads_like();
    Mat de(e.rows, e.cols);
    context_map_backward(dec, e, xhat, dxhat, g_dec, &de);
    context_map_backward(enc, x, e, de, g_enc, nullptr);

    const double eps = 1e-5;
    double max_rel = 0.0;
    auto sweep = [&](ContextMap& map, const ContextMap& grads) {
        std::vector<Mat*> tensors{&map.b};
        std::vector<const Mat*> gtensors{&grads.b};
        for (size_t j = 0; j < map.w.size(); ++j) {
            tensors.push_back(&map.w[j]);
            gtensors.push_back(&grads.w[j]);
        }
        for (size_t ti = 0; ti < tensors.size(); ++ti) {
            for (size_t i = 0; i < tensors[ti]->data.size(); ++i) {
                const double saved = tensors[ti]->data[i];
                tensors[ti]->data[i] = saved + eps;
                const double up = loss_of();
                tensors[ti]->data[i] = saved - eps;
                const double down = loss_of();
                tensors[ti]->data[i] = saved;
                const double fd = (up - down) / (2 * eps);
                const double an = gtensors[ti]->data[i];
                max_rel = std::max(max_rel, std::abs(fd - an) /
                                                std::max({std::abs(fd), std::abs(an), 1e-3}));
            }
        }
    };
    sweep(enc, g_enc);
    sweep(dec, g_dec);
    CHECK(max_rel < 1e-8);
}

TEST_CASE("gradient check passes on the full stage-1 path") {
    const ModelConfig cfg = toy_config();
    TrainState state = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 53);
    const GradCheckReport rep = gradient_check(state, batch, 1e-5, ForwardMode::stage1);
    CHECK(rep.checked > 100);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("gradient check passes on the full stage-2 path") {
    const ModelConfig cfg = toy_config();
    TrainState state = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 59);
    const GradCheckReport rep = gradient_check(state, batch, 1e-5, ForwardMode::stage2);
    CHECK(rep.checked > 100);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("gradient check honors spd_grad_to_encoder = false") {
    ModelConfig cfg = toy_config();
    cfg.spd_grad_to_encoder = false;
    TrainState state = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 61);
    const GradCheckReport rep = gradient_check(state, batch, 1e-5, ForwardMode::stage2);
    CHECK(rep.checked > 100);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("gradient check skips frozen tensors") {
    ModelConfig cfg = toy_config();
    cfg.toggles.tc = false;
    cfg.toggles.bt = false;
    TrainState state = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 67);
    const GradCheckReport rep = gradient_check(state, batch, 1e-5, ForwardMode::stage1);
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("train honors the two-stage contract") {
    ModelConfig cfg = toy_config();
    cfg.segment_len = 8;
    cfg.stage1_steps = 5;
    cfg.optimizer.total_steps = 12;
    const Corpus corpus = toy_corpus(cfg, 4, 20, 71);
    std::vector<StepReport> log;
    const TrainState final_state = train(cfg, corpus, "", &log);
    REQUIRE(log.size() == 12);
    CHECK(final_state.step == 12);
    for (int64_t s = 0; s < 12; ++s) {
        CHECK(log[s].step == s);
        if (s < cfg.stage1_steps) {
            CHECK(log[s].stage == 1);
            CHECK(log[s].tokens_used == TokenSource::ground_truth);
            CHECK_FALSE(log[s].spd.has_value());
        } else {
            CHECK(log[s].stage == 2);
            CHECK(log[s].tokens_used == TokenSource::distilled);
            REQUIRE(log[s].spd.has_value());
        }
        CHECK(log[s].total == report_total_recomputed(cfg, log[s]));
    }
}

TEST_CASE("train is a pure function of config, corpus and seed") {
    ModelConfig cfg = toy_config();
    cfg.segment_len = 8;
    const Corpus corpus = toy_corpus(cfg, 4, 20, 73);
    std::vector<StepReport> log_a, log_b;
    train(cfg, corpus, "", &log_a);
    train(cfg, corpus, "", &log_b);
    REQUIRE(log_a.size() == log_b.size());
    for (size_t i = 0; i < log_a.size(); ++i) {
        CHECK(log_a[i].total == log_b[i].total);
        CHECK(log_a[i].recon == log_b[i].recon);
        CHECK(log_a[i].codebook == log_b[i].codebook);
        CHECK(log_a[i].commitment == log_b[i].commitment);
    }
}

TEST_CASE("train requires tokens or a tokenizer") {
    ModelConfig cfg = toy_config();
    cfg.segment_len = 8;
    Corpus corpus = toy_corpus(cfg, 2, 20, 79);
    corpus.tokens[1].reset();
    CHECK_THROWS_WITH_AS(train(cfg, corpus, "", nullptr), doctest::Contains("tokenizer"),
                         std::invalid_argument);
}

TEST_CASE("train skips utterances shorter than the segment length") {
    ModelConfig cfg = toy_config();
    cfg.segment_len = 50;
    const Corpus corpus = toy_corpus(cfg, 3, 20, 83);
    CHECK_THROWS_WITH_AS(train(cfg, corpus, "", nullptr), doctest::Contains("segment_len"),
                         std::invalid_argument);
}

TEST_CASE("checkpoint round trip preserves the state at f32 precision") {
    stavq::test::TempDir dir("ckpt");
    const ModelConfig cfg = toy_config();
    TrainState state = init_train_state(cfg);
    backward_and_step(state, toy_batch(cfg, 89));
    state.dead_counters[1][3] = 42;
    save_checkpoint(state, dir.file("ck"));

    TrainState back = load_checkpoint(dir.file("ck"));
    CHECK(back.step == state.step);
    CHECK(back.stage == state.stage);
    CHECK(back.cfg.seed == cfg.seed);
    CHECK(back.dead_counters[1][3] == 42);
    CHECK(back.rng_batch.state == state.rng_batch.state);

    std::vector<std::pair<std::string, const Mat*>> orig;
    visit_params(state.params, [&](const std::string& n, Mat& t) { orig.emplace_back(n, &t); });
    visit_params(back.params, [&](const std::string& n, Mat& t) {
        for (auto& [name, om] : orig) {
            if (name != n) continue;
            REQUIRE(t.same_shape(*om));
            for (size_t i = 0; i < t.data.size(); ++i)
                CHECK(static_cast<float>(t.data[i]) == static_cast<float>(om->data[i]));
        }
    });

    // Saving the loaded state again is byte-stable.
    save_checkpoint(back, dir.file("ck2"));
    std::ifstream a(dir.file("ck.stap"), std::ios::binary);
    std::ifstream b(dir.file("ck2.stap"), std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
}

TEST_CASE("encode/decode helpers compose the library path") {
    const ModelConfig cfg = toy_config();
    TrainState state = init_train_state(cfg);
    const Batch batch = toy_batch(cfg, 97);

    const EncodeResult enc = encode_utterance(state, batch[0].features);
    const TokenSequence expect = predict_tokens(spd_forward(enc.e, state.params.spd));
    CHECK(enc.tokens_used.tokens == expect.tokens);
    CHECK(enc.q == rvq_sta_encode(LatentSequence{enc.z}, expect, state.params.codebooks));

    const Mat xhat = decode_codes(state, enc.q.codes);
    const LatentSequence zhat = rvq_decode(enc.q.codes, state.params.codebooks);
    CHECK(xhat == context_map_forward(state.params.codec.decoder, zhat.frames));

    // External tokens take precedence.
    TokenSequence ext;
    ext.vocab = static_cast<uint32_t>(cfg.v);
    for (int t = 0; t < batch[0].features.rows; ++t) ext.tokens.push_back(2);
    const EncodeResult enc2 = encode_utterance(state, batch[0].features, &ext);
    for (uint32_t c : enc2.q.codes[0]) CHECK(c == 2);
}
