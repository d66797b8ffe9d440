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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stavq/config.hpp"
#include "stavq/corpus.hpp"
#include "stavq/nn.hpp"
#include "stavq/rng.hpp"
#include "stavq/rvq.hpp"
#include "stavq/spd.hpp"
#include "stavq/tokenizer.hpp"
#include "stavq/types.hpp"

namespace stavq {

// Per-frame parametric maps around the quantizer. The bottleneck (radius-1
// context) sits between encoder and quantizer and is active iff toggles.bt.
struct CodecParams {
    ContextMap encoder;     // d_in -> d, radius 0
    ContextMap bottleneck;  // d -> d, radius 1
    ContextMap decoder;     // d -> d_in, radius 0
};

struct ModelParams {
    CodecParams codec;
    CodebookStack codebooks;
    SpdParams spd;
};

// Visits every parameter tensor in a fixed order; the same order backs the
// optimizer moments, gradients, and the checkpoint layout.
template <class MP, class Fn>
void visit_params(MP& p, Fn&& fn) {
    auto visit_map = [&fn](auto& m, const std::string& prefix) {
        for (size_t j = 0; j < m.w.size(); ++j) fn(prefix + ".w" + std::to_string(j), m.w[j]);
        fn(prefix + ".b", m.b);
    };
    visit_map(p.codec.encoder, "encoder");
    visit_map(p.codec.bottleneck, "bottleneck");
    visit_map(p.codec.decoder, "decoder");
    for (size_t i = 0; i < p.codebooks.layers.size(); ++i)
        fn("codebook" + std::to_string(i), p.codebooks.layers[i].entries);
    visit_map(p.spd, "spd");
}

// Frozen tensors are excluded from optimization, dead-entry resets, and the
// gradient check: the bottleneck when bt is off, the layer-1 codebook when
// tc is off.
bool param_trainable(const std::string& name, const Toggles& toggles);

enum class ForwardMode { stage1, stage2, inference };
enum class TokenSource { ground_truth, distilled };

const char* token_source_name(TokenSource s);

struct StepReport {
    int64_t step = 0;
    int stage = 1;
    double recon = 0.0;
    double codebook = 0.0;
    double commitment = 0.0;
    std::optional<double> spd;  // absent in stage 1
    double total = 0.0;
    TokenSource tokens_used = TokenSource::ground_truth;
    double lr = 0.0;
};

struct TrainState {
    ModelConfig cfg;
    ModelParams params;
    ModelParams adam_m;
    ModelParams adam_v;
    int64_t step = 0;
    int stage = 1;
    std::vector<std::vector<int>> dead_counters;  // [layer][entry]
    Rng rng_mask;
    Rng rng_batch;
    Rng rng_reset;
};

TrainState init_train_state(const ModelConfig& cfg);

// Linear warmup 0 -> base_lr over [0, warmup], then cosine decay to exactly 0
// at step == total.
double cosine_lr(int64_t step, double base_lr, int64_t warmup, int64_t total);

// One bias-corrected Adam update, no weight decay. `t` is the 1-based update
// count shared by all tensors.
void adam_step(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads,
               const std::vector<Mat*>& m, const std::vector<Mat*>& v, int64_t t, double lr,
               double beta1, double beta2, double eps = 1e-8);

struct Segment {
    Mat features;          // T_seg x d_in
    TokenSequence tokens;  // ground-truth tokens aligned with the segment
};
using Batch = std::vector<Segment>;

// One full forward pass over a segment, with everything the backward pass and
// the stop-gradient anchors need.
struct SegmentForward {
    ForwardMode mode = ForwardMode::stage1;
    MaskPlan plan;
    Mat e;         // encoder output
    Mat z;         // bottleneck output (or e when bt is off)
    Mat e_masked;  // classifier input (stage 2: masked e; inference: e)
    Mat logits;    // empty in stage 1
    TokenSequence quant_tokens;  // tokens offered to the quantizer
    TokenSource token_source = TokenSource::ground_truth;
    QuantizationOutput q;
    Mat xhat;
    double recon = 0.0;
    double cb_loss = 0.0;
    double commit_loss = 0.0;
    std::optional<double> spd_loss;
    Mat ce_grad;  // d spd_loss / d logits
};

SegmentForward forward(const Mat& features, const TokenSequence& tokens_gt,
                       const TrainState& state, ForwardMode mode, const MaskPlan& plan);

// Batch-mean losses and parameter gradients of the total training loss
//   total = recon + codebook + commitment_weight * commitment
//           (+ lambda_spd * spd in stage 2)
// under the straight-through estimator (reconstruction gradient w.r.t. z is
// taken w.r.t. the quantized sum; codebooks receive gradient only from the
// codebook loss).
struct GradResult {
    double recon = 0.0;
    double codebook = 0.0;
    double commitment = 0.0;
    std::optional<double> spd;
    double total = 0.0;
    ModelParams grads;
    std::vector<SegmentForward> fwd;
};

GradResult compute_gradients(const TrainState& state, const Batch& batch, ForwardMode mode,
                             const std::vector<MaskPlan>& plans);

// One optimization step: gradients, Adam at the cosine-schedule rate,
// dead-entry bookkeeping, counters advanced. Throws before mutating anything
// if the loss or a gradient is non-finite.
StepReport backward_and_step(TrainState& state, const Batch& batch);

// Central-finite-difference check of the analytic gradients on a sampled
// subset of trainable parameters. The finite-difference evaluation holds the
// stop-gradient payloads (quantizer codes, quantized sum, straight-through
// offset) at their unperturbed values, which is the function the analytic
// gradients differentiate; parameters whose perturbation flips any discrete
// decision (a code index or a predicted token) are detected and excluded.
struct GradCheckReport {
    double max_rel_err = 0.0;
    int checked = 0;
    int skipped = 0;
};

GradCheckReport gradient_check(TrainState& state, const Batch& batch, double eps, ForwardMode mode,
                               int max_params_per_tensor = 0, uint64_t sample_seed = 0);

// Runs stage 1 for stage1_steps and stage 2 up to total_steps. When out_dir
// is non-empty, writes config.ini, a JSON-lines training log, periodic
// checkpoints, and checkpoint_final. When a tokenizer is given, utterances
// without token files are tokenized with it.
TrainState train(const ModelConfig& cfg, const Corpus& corpus, const std::string& out_dir,
                 std::vector<StepReport>* log_out = nullptr,
                 const KMeansModel* tokenizer = nullptr);

// Checkpoints: <stem>.stap (params, moments, dead counters, f32) plus
// <stem>.manifest.json (step, stage, seed, config hash, full config text,
// RNG stream states).
void save_checkpoint(const TrainState& state, const std::string& stem);
TrainState load_checkpoint(const std::string& stem);

// Inference helpers. Token priority for the quantizer when sta is on:
// external tokens if given, else tokens predicted from unmasked e.
struct EncodeResult {
    Mat e;
    Mat z;
    TokenSequence tokens_used;
    QuantizationOutput q;
};

EncodeResult encode_utterance(const TrainState& state, const Mat& features,
                              const TokenSequence* external_tokens = nullptr);
Mat decode_codes(const TrainState& state, const std::vector<std::vector<uint32_t>>& codes);

}  // namespace stavq
