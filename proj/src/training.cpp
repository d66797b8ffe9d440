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

#include "stavq/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "stavq/io.hpp"

namespace stavq {

namespace fs = std::filesystem;

bool param_trainable(const std::string& name, const Toggles& toggles) {
    if (!toggles.bt && name.rfind("bottleneck.", 0) == 0) return false;
    if (!toggles.tc && name == "codebook0") return false;
    return true;
}

const char* token_source_name(TokenSource s) {
    return s == TokenSource::ground_truth ? "ground_truth" : "distilled";
}

namespace {

ModelParams make_params(const ModelConfig& cfg) {
    ModelParams p;
    p.codec.encoder = ContextMap::create(cfg.d_in, cfg.d, 0);
    p.codec.bottleneck = ContextMap::create(cfg.d, cfg.d, 1);
    p.codec.decoder = ContextMap::create(cfg.d, cfg.d_in, 0);
    p.codebooks.layers.assign(cfg.n_q, Codebook{Mat(cfg.k, cfg.d)});
    p.spd = spd_create(cfg.d, cfg.v, cfg.spd_context_radius);
    return p;
}

ModelParams zeros_like(const ModelConfig& cfg) { return make_params(cfg); }

int stage_of(const ModelConfig& cfg, int64_t step) {
    return step < cfg.stage1_steps ? 1 : 2;
}

double combine_total(const ModelConfig& cfg, double recon, double cb, double commit,
                     const std::optional<double>& spd) {
    double total = recon + cb + cfg.commitment_weight * commit;
    if (spd) total += cfg.lambda_spd * *spd;
    return total;
}

}  // namespace

TrainState init_train_state(const ModelConfig& cfg) {
    require_valid(cfg);
    TrainState state;
    state.cfg = cfg;
    state.params = make_params(cfg);

    Rng init_rng(derive_seed(cfg.seed, "init"));
    state.params.codec.encoder.init(init_rng);
    state.params.codec.bottleneck.init(init_rng);
    state.params.codec.decoder.init(init_rng);
    state.params.spd.init(init_rng);
    for (auto& cb : state.params.codebooks.layers)
        for (double& v : cb.entries.data) v = init_rng.uniform(-0.1, 0.1);

    state.adam_m = zeros_like(cfg);
    state.adam_v = zeros_like(cfg);
    state.dead_counters.assign(cfg.n_q, std::vector<int>(cfg.k, 0));
    state.rng_mask = Rng(derive_seed(cfg.seed, "masking"));
    state.rng_batch = Rng(derive_seed(cfg.seed, "batching"));
    state.rng_reset = Rng(derive_seed(cfg.seed, "dead_reset"));
    state.step = 0;
    state.stage = stage_of(cfg, 0);
    return state;
}

double cosine_lr(int64_t step, double base_lr, int64_t warmup, int64_t total) {
    if (step < 0) throw std::invalid_argument("cosine_lr: step must be >= 0");
    if (step > total) throw std::invalid_argument("cosine_lr: step exceeds total");
    if (!(warmup < total)) throw std::invalid_argument("cosine_lr: warmup must be < total");
    if (step < warmup) return base_lr * static_cast<double>(step) / static_cast<double>(warmup);
    if (step == total) return 0.0;  // annealed exactly to zero
    const double progress =
        static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
    return base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

void adam_step(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads,
               const std::vector<Mat*>& m, const std::vector<Mat*>& v, int64_t t, double lr,
               double beta1, double beta2, double eps) {
    if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size())
        throw std::invalid_argument("adam_step: tensor list size mismatch");
    if (lr < 0.0) throw std::invalid_argument("adam_step: lr must be >= 0");
    if (t < 1) throw std::invalid_argument("adam_step: update count must be >= 1");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < params.size(); ++i) {
        Mat& p = *params[i];
        const Mat& g = *grads[i];
        Mat& mi = *m[i];
        Mat& vi = *v[i];
        if (!p.same_shape(g) || !p.same_shape(mi) || !p.same_shape(vi))
            throw std::invalid_argument("adam_step: shape mismatch at tensor " + std::to_string(i));
        if (!all_finite(g)) throw std::invalid_argument("adam_step: non-finite gradient");
        for (size_t j = 0; j < p.data.size(); ++j) {
            mi.data[j] = beta1 * mi.data[j] + (1.0 - beta1) * g.data[j];
            vi.data[j] = beta2 * vi.data[j] + (1.0 - beta2) * g.data[j] * g.data[j];
            const double mhat = mi.data[j] / bc1;
            const double vhat = vi.data[j] / bc2;
            p.data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

SegmentForward forward(const Mat& features, const TokenSequence& tokens_gt,
                       const TrainState& state, ForwardMode mode, const MaskPlan& plan) {
    const ModelConfig& cfg = state.cfg;
    if (features.cols != cfg.d_in)
        throw std::invalid_argument("forward: feature dim " + std::to_string(features.cols) +
                                    " does not match d_in=" + std::to_string(cfg.d_in));
    if (mode == ForwardMode::stage1 &&
        static_cast<int>(tokens_gt.size()) != features.rows)
        throw std::invalid_argument("forward: token/frame count mismatch");

    SegmentForward f;
    f.mode = mode;
    f.plan = plan;
    f.e = context_map_forward(state.params.codec.encoder, features);
    f.z = cfg.toggles.bt ? context_map_forward(state.params.codec.bottleneck, f.e) : f.e;

    if (mode == ForwardMode::stage1) {
        f.quant_tokens = tokens_gt;
        f.token_source = TokenSource::ground_truth;
    } else {
        // Stage 2 masks the classifier input; inference sees unmasked e.
        f.e_masked = (mode == ForwardMode::stage2) ? apply_mask(f.e, plan) : f.e;
        f.logits = spd_forward(f.e_masked, state.params.spd);
        f.quant_tokens = predict_tokens(f.logits);
        f.token_source = TokenSource::distilled;
        if (mode == ForwardMode::stage2) {
            if (static_cast<int>(tokens_gt.size()) != features.rows)
                throw std::invalid_argument("forward: token/frame count mismatch");
            auto ce = cross_entropy(f.logits, tokens_gt);
            f.spd_loss = ce.loss;
            f.ce_grad = std::move(ce.grad_logits);
        }
    }

    const LatentSequence zl{f.z};
    f.q = cfg.toggles.sta ? rvq_sta_encode(zl, f.quant_tokens, state.params.codebooks)
                          : rvq_encode(zl, state.params.codebooks);

    // Straight-through: the decoder consumes the quantized sum; gradients of
    // the reconstruction loss w.r.t. z are taken w.r.t. this input.
    f.xhat = context_map_forward(state.params.codec.decoder, f.q.summed);

    double acc = 0.0;
    for (size_t i = 0; i < f.xhat.data.size(); ++i) {
        const double d = f.xhat.data[i] - features.data[i];
        acc += d * d;
    }
    f.recon = acc / static_cast<double>(f.xhat.data.size());
    const VqLosses vq = vq_losses(zl, f.q);
    f.cb_loss = vq.codebook;
    f.commit_loss = vq.commitment;
    return f;
}

GradResult compute_gradients(const TrainState& state, const Batch& batch, ForwardMode mode,
                             const std::vector<MaskPlan>& plans) {
    if (batch.empty()) throw std::invalid_argument("compute_gradients: empty batch");
    if (plans.size() != batch.size())
        throw std::invalid_argument("compute_gradients: one mask plan per segment required");
    const ModelConfig& cfg = state.cfg;
    GradResult res;
    res.grads = zeros_like(cfg);
    const double inv_b = 1.0 / static_cast<double>(batch.size());

    double spd_sum = 0.0;
    bool has_spd = false;

    for (size_t s = 0; s < batch.size(); ++s) {
        const Segment& seg = batch[s];
        SegmentForward f = forward(seg.features, seg.tokens, state, mode, plans[s]);
        const int t_len = f.z.rows;
        const int d = f.z.cols;

        // d recon / d xhat.
        Mat dxhat(f.xhat.rows, f.xhat.cols);
        const double scale = 2.0 * inv_b / static_cast<double>(f.xhat.data.size());
        for (size_t i = 0; i < f.xhat.data.size(); ++i)
            dxhat.data[i] = scale * (f.xhat.data[i] - seg.features.data[i]);

        // Decoder, then the straight-through hop back to z.
        Mat dz(t_len, d);
        context_map_backward(state.params.codec.decoder, f.q.summed, f.xhat, dxhat,
                             res.grads.codec.decoder, &dz);

        // Commitment loss pulls z toward the (frozen) quantized sum.
        const double commit_scale = 2.0 * cfg.commitment_weight * inv_b / t_len;
        for (int t = 0; t < t_len; ++t) {
            double* drow = dz.row(t);
            const double* zrow = f.z.row(t);
            const double* qrow = f.q.summed.row(t);
            for (int j = 0; j < d; ++j) drow[j] += commit_scale * (zrow[j] - qrow[j]);
        }

        // Codebook loss pulls the selected entries toward (frozen) z. Every
        // layer's chosen entry sees the same summed-minus-z difference.
        const double cb_scale = 2.0 * inv_b / t_len;
        for (int i = 0; i < f.q.num_layers(); ++i) {
            Mat& g = res.grads.codebooks.layers[i].entries;
            for (int t = 0; t < t_len; ++t) {
                double* grow = g.row(static_cast<int>(f.q.codes[i][t]));
                const double* zrow = f.z.row(t);
                const double* qrow = f.q.summed.row(t);
                for (int j = 0; j < d; ++j) grow[j] += cb_scale * (qrow[j] - zrow[j]);
            }
        }

        // Classifier branch; gradient reaches e only through unmasked
        // positions, and only when configured to.
        Mat de(t_len, f.e.cols);
        if (f.spd_loss) {
            Mat dlogits(f.ce_grad.rows, f.ce_grad.cols);
            const double lscale = cfg.lambda_spd * inv_b;
            for (size_t i = 0; i < dlogits.data.size(); ++i)
                dlogits.data[i] = lscale * f.ce_grad.data[i];
            Mat demask(t_len, f.e.cols);
            context_map_backward(state.params.spd, f.e_masked, f.logits, dlogits, res.grads.spd,
                                 cfg.spd_grad_to_encoder ? &demask : nullptr);
            if (cfg.spd_grad_to_encoder) {
                const Mat gated = apply_mask(demask, f.plan);
                for (size_t i = 0; i < de.data.size(); ++i) de.data[i] += gated.data[i];
            }
        }

        if (cfg.toggles.bt) {
            context_map_backward(state.params.codec.bottleneck, f.e, f.z, dz,
                                 res.grads.codec.bottleneck, &de);
        } else {
            for (size_t i = 0; i < de.data.size(); ++i) de.data[i] += dz.data[i];
        }
        context_map_backward(state.params.codec.encoder, seg.features, f.e, de,
                             res.grads.codec.encoder, nullptr);

        res.recon += f.recon * inv_b;
        res.codebook += f.cb_loss * inv_b;
        res.commitment += f.commit_loss * inv_b;
        if (f.spd_loss) {
            spd_sum += *f.spd_loss * inv_b;
            has_spd = true;
        }
        res.fwd.push_back(std::move(f));
    }

    if (has_spd) res.spd = spd_sum;
    res.total = combine_total(cfg, res.recon, res.codebook, res.commitment, res.spd);
    return res;
}

namespace {

// Input residual r_{i-1} of layer `layer` at frame t, rebuilt from the cached
// forward (recursion order).
std::vector<double> layer_input_residual(const SegmentForward& f, int layer, int t) {
    const int d = f.z.cols;
    std::vector<double> r(f.z.row(t), f.z.row(t) + d);
    for (int i = 0; i < layer; ++i) {
        const double* lrow = f.q.layer_q[i].row(t);
        for (int j = 0; j < d; ++j) r[j] -= lrow[j];
    }
    return r;
}

}  // namespace

StepReport backward_and_step(TrainState& state, const Batch& batch) {
    const ModelConfig& cfg = state.cfg;
    const ForwardMode mode = state.stage == 1 ? ForwardMode::stage1 : ForwardMode::stage2;

    std::vector<MaskPlan> plans(batch.size());
    if (mode == ForwardMode::stage2 && cfg.toggles.mask) {
        for (size_t s = 0; s < batch.size(); ++s)
            plans[s] = sample_mask_plan(batch[s].features.rows, cfg.d, cfg.mask, state.rng_mask);
    }

    GradResult grad = compute_gradients(state, batch, mode, plans);
    if (!std::isfinite(grad.total))
        throw std::runtime_error(
            "step " + std::to_string(state.step) + ": non-finite loss (recon=" +
            std::to_string(grad.recon) + ", codebook=" + std::to_string(grad.codebook) +
            ", commitment=" + std::to_string(grad.commitment) +
            (grad.spd ? ", spd=" + std::to_string(*grad.spd) : std::string()) + ")");

    const double lr =
        cosine_lr(state.step, cfg.optimizer.base_lr, cfg.optimizer.warmup_steps,
                  cfg.optimizer.total_steps);

    std::vector<Mat*> params, m, v;
    std::vector<const Mat*> grads;
    {
        std::vector<std::pair<std::string, Mat*>> prefs, mrefs, vrefs, grefs;
        visit_params(state.params, [&](const std::string& n, Mat& t) { prefs.emplace_back(n, &t); });
        visit_params(state.adam_m, [&](const std::string& n, Mat& t) { mrefs.emplace_back(n, &t); });
        visit_params(state.adam_v, [&](const std::string& n, Mat& t) { vrefs.emplace_back(n, &t); });
        visit_params(grad.grads, [&](const std::string& n, Mat& t) { grefs.emplace_back(n, &t); });
        for (size_t i = 0; i < prefs.size(); ++i) {
            if (!param_trainable(prefs[i].first, cfg.toggles)) continue;
            params.push_back(prefs[i].second);
            m.push_back(mrefs[i].second);
            v.push_back(vrefs[i].second);
            grads.push_back(grefs[i].second);
        }
    }
    adam_step(params, grads, m, v, state.step + 1, lr, cfg.optimizer.beta1, cfg.optimizer.beta2);

    // Dead-entry bookkeeping: entries unused for dead_entry_steps consecutive
    // steps are re-seeded to a sampled input residual of their layer. Layer 1
    // is exempt when STA dictates its usage or when it is frozen.
    for (int i = 0; i < cfg.n_q; ++i) {
        if (i == 0 && (cfg.toggles.sta || !cfg.toggles.tc)) continue;
        std::vector<bool> used(cfg.k, false);
        for (const auto& f : grad.fwd)
            for (uint32_t c : f.q.codes[i]) used[c] = true;
        for (int k = 0; k < cfg.k; ++k) {
            if (used[k]) {
                state.dead_counters[i][k] = 0;
                continue;
            }
            if (++state.dead_counters[i][k] < cfg.dead_entry_steps) continue;
            const int seg = static_cast<int>(state.rng_reset.uniform_int(grad.fwd.size()));
            const SegmentForward& f = grad.fwd[seg];
            const int t = static_cast<int>(
                state.rng_reset.uniform_int(static_cast<uint64_t>(f.z.rows)));
            const std::vector<double> r = layer_input_residual(f, i, t);
            std::copy(r.begin(), r.end(), state.params.codebooks.layers[i].entries.row(k));
            state.dead_counters[i][k] = 0;
        }
    }

    StepReport rep;
    rep.step = state.step;
    rep.stage = state.stage;
    rep.recon = grad.recon;
    rep.codebook = grad.codebook;
    rep.commitment = grad.commitment;
    rep.spd = grad.spd;
    rep.total = grad.total;
    rep.tokens_used = grad.fwd.front().token_source;
    rep.lr = lr;

    state.step += 1;
    state.stage = stage_of(cfg, state.step);
    return rep;
}

// ---------------------------------------------------------------------------
// Gradient check.

namespace {

struct Anchors {
    // Per segment, frozen at the unperturbed parameters.
    std::vector<Mat> z0;
    std::vector<Mat> zhat0;
    std::vector<Mat> ste_offset;  // zhat0 - z0
    std::vector<Mat> e_masked0;
    std::vector<std::vector<std::vector<uint32_t>>> codes0;
    std::vector<std::vector<uint32_t>> tokens0;  // predicted tokens (stage 2)
};

Anchors make_anchors(const GradResult& base) {
    Anchors a;
    for (const auto& f : base.fwd) {
        a.z0.push_back(f.z);
        a.zhat0.push_back(f.q.summed);
        Mat off(f.z.rows, f.z.cols);
        for (size_t i = 0; i < off.data.size(); ++i)
            off.data[i] = f.q.summed.data[i] - f.z.data[i];
        a.ste_offset.push_back(std::move(off));
        a.e_masked0.push_back(f.e_masked);
        a.codes0.push_back(f.q.codes);
        if (f.mode == ForwardMode::stage2) a.tokens0.push_back(f.quant_tokens.tokens);
    }
    return a;
}

struct SurrogateEval {
    double loss = 0.0;
    bool decisions_match = true;
};

// Evaluates the differentiable training loss at the current parameters while
// holding every stop-gradient payload at its anchored value, and reruns the
// discrete decision path to detect flips.
SurrogateEval eval_surrogate(const TrainState& state, const Batch& batch, ForwardMode mode,
                             const std::vector<MaskPlan>& plans, const Anchors& anchors) {
    const ModelConfig& cfg = state.cfg;
    SurrogateEval ev;
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    double recon = 0.0, cb = 0.0, commit = 0.0, spd = 0.0;
    bool has_spd = false;

    for (size_t s = 0; s < batch.size(); ++s) {
        const Segment& seg = batch[s];
        const Mat e = context_map_forward(state.params.codec.encoder, seg.features);
        const Mat z = cfg.toggles.bt ? context_map_forward(state.params.codec.bottleneck, e) : e;
        const int t_len = z.rows;
        const int d = z.cols;

        TokenSequence quant_tokens;
        if (mode == ForwardMode::stage2) {
            const Mat e_masked = cfg.toggles.mask ? apply_mask(e, plans[s]) : e;
            const Mat logits_live = spd_forward(e_masked, state.params.spd);
            quant_tokens = predict_tokens(logits_live);
            if (quant_tokens.tokens != anchors.tokens0[s]) ev.decisions_match = false;
            const Mat& ce_input = cfg.spd_grad_to_encoder ? e_masked : anchors.e_masked0[s];
            const Mat logits_for_loss =
                cfg.spd_grad_to_encoder ? logits_live : spd_forward(ce_input, state.params.spd);
            spd += cross_entropy(logits_for_loss, seg.tokens).loss * inv_b;
            has_spd = true;
        } else {
            quant_tokens = seg.tokens;
        }

        const LatentSequence zl{z};
        const QuantizationOutput q_live =
            cfg.toggles.sta ? rvq_sta_encode(zl, quant_tokens, state.params.codebooks)
                            : rvq_encode(zl, state.params.codebooks);
        if (q_live.codes != anchors.codes0[s]) ev.decisions_match = false;

        // Straight-through reconstruction: decoder input moves with z, offset
        // frozen.
        Mat dec_in(t_len, d);
        for (size_t i = 0; i < dec_in.data.size(); ++i)
            dec_in.data[i] = z.data[i] + anchors.ste_offset[s].data[i];
        const Mat xhat = context_map_forward(state.params.codec.decoder, dec_in);
        double acc = 0.0;
        for (size_t i = 0; i < xhat.data.size(); ++i) {
            const double dd = xhat.data[i] - seg.features.data[i];
            acc += dd * dd;
        }
        recon += acc / static_cast<double>(xhat.data.size()) * inv_b;

        // Codebook term: frozen z0 against live entries at frozen codes.
        double cb_acc = 0.0, commit_acc = 0.0;
        std::vector<double> zfc(d);
        for (int t = 0; t < t_len; ++t) {
            std::fill(zfc.begin(), zfc.end(), 0.0);
            for (int i = 0; i < cfg.n_q; ++i) {
                const double* entry = state.params.codebooks.layers[i].entries.row(
                    static_cast<int>(anchors.codes0[s][i][t]));
                for (int j = 0; j < d; ++j) zfc[j] += entry[j];
            }
            cb_acc += squared_distance(anchors.z0[s].row(t), zfc.data(), d);
            commit_acc += squared_distance(z.row(t), anchors.zhat0[s].row(t), d);
        }
        cb += cb_acc / t_len * inv_b;
        commit += commit_acc / t_len * inv_b;
    }

    ev.loss = combine_total(cfg, recon, cb, commit,
                            has_spd ? std::optional<double>(spd) : std::nullopt);
    return ev;
}

}  // namespace

GradCheckReport gradient_check(TrainState& state, const Batch& batch, double eps, ForwardMode mode,
                               int max_params_per_tensor, uint64_t sample_seed) {
    if (eps <= 0.0) throw std::invalid_argument("gradient_check: eps must be > 0");
    const ModelConfig& cfg = state.cfg;

    std::vector<MaskPlan> plans(batch.size());
    if (mode == ForwardMode::stage2 && cfg.toggles.mask) {
        Rng mask_rng(derive_seed(cfg.seed, "gradcheck_mask"));
        for (size_t s = 0; s < batch.size(); ++s)
            plans[s] = sample_mask_plan(batch[s].features.rows, cfg.d, cfg.mask, mask_rng);
    }

    GradResult base = compute_gradients(state, batch, mode, plans);
    const Anchors anchors = make_anchors(base);

    // Flattened (parameter, gradient) pairs in visit order.
    std::vector<std::pair<std::string, Mat*>> prefs;
    std::vector<Mat*> grefs;
    visit_params(state.params, [&](const std::string& n, Mat& t) { prefs.emplace_back(n, &t); });
    visit_params(base.grads, [&](const std::string&, Mat& t) { grefs.push_back(&t); });

    Rng sample_rng(derive_seed(sample_seed != 0 ? sample_seed : cfg.seed, "gradcheck_sample"));
    GradCheckReport rep;
    for (size_t ti = 0; ti < prefs.size(); ++ti) {
        if (!param_trainable(prefs[ti].first, cfg.toggles)) continue;
        Mat& tensor = *prefs[ti].second;
        const Mat& gtensor = *grefs[ti];

        std::vector<size_t> indices(tensor.data.size());
        for (size_t i = 0; i < indices.size(); ++i) indices[i] = i;
        if (max_params_per_tensor > 0 &&
            indices.size() > static_cast<size_t>(max_params_per_tensor)) {
            // Fisher-Yates prefix shuffle, then truncate.
            for (size_t i = 0; i < static_cast<size_t>(max_params_per_tensor); ++i) {
                const size_t j = i + sample_rng.uniform_int(indices.size() - i);
                std::swap(indices[i], indices[j]);
            }
            indices.resize(static_cast<size_t>(max_params_per_tensor));
        }

        for (size_t idx : indices) {
            const double saved = tensor.data[idx];
            tensor.data[idx] = saved + eps;
            const SurrogateEval plus = eval_surrogate(state, batch, mode, plans, anchors);
            tensor.data[idx] = saved - eps;
            const SurrogateEval minus = eval_surrogate(state, batch, mode, plans, anchors);
            tensor.data[idx] = saved;
            if (!plus.decisions_match || !minus.decisions_match) {
                rep.skipped++;
                continue;
            }
            const double fd = (plus.loss - minus.loss) / (2.0 * eps);
            const double an = gtensor.data[idx];
            const double rel =
                std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-3});
            rep.max_rel_err = std::max(rep.max_rel_err, rel);
            rep.checked++;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Training loop and checkpoints.

namespace {

nlohmann::ordered_json report_json(const StepReport& rep) {
    nlohmann::ordered_json j;
    j["step"] = rep.step;
    j["stage"] = rep.stage;
    j["lr"] = rep.lr;
    j["recon"] = rep.recon;
    j["codebook"] = rep.codebook;
    j["commitment"] = rep.commitment;
    if (rep.spd) j["spd"] = *rep.spd;
    else j["spd"] = nullptr;
    j["total"] = rep.total;
    j["tokens_used"] = token_source_name(rep.tokens_used);
    return j;
}

std::string checkpoint_stem(const std::string& out_dir, int64_t step, bool final) {
    char buf[64];
    if (final) return (fs::path(out_dir) / "checkpoint_final").string();
    std::snprintf(buf, sizeof(buf), "checkpoint_%08lld", static_cast<long long>(step));
    return (fs::path(out_dir) / buf).string();
}

}  // namespace

TrainState train(const ModelConfig& cfg, const Corpus& corpus, const std::string& out_dir,
                 std::vector<StepReport>* log_out, const KMeansModel* tokenizer) {
    require_valid(cfg);
    if (corpus.d_in != cfg.d_in)
        throw std::invalid_argument("train: corpus d_in " + std::to_string(corpus.d_in) +
                                    " does not match config d_in " + std::to_string(cfg.d_in));

    // Materialize ground-truth tokens for every utterance.
    std::vector<TokenSequence> tokens(corpus.features.size());
    for (size_t u = 0; u < corpus.features.size(); ++u) {
        if (corpus.tokens[u]) {
            tokens[u] = *corpus.tokens[u];
        } else if (tokenizer != nullptr) {
            tokens[u] = kmeans_assign(corpus.features[u], *tokenizer);
        } else {
            throw std::invalid_argument("train: utterance " + std::to_string(u) +
                                        " has no tokens and no tokenizer was provided");
        }
        if (tokens[u].vocab != static_cast<uint32_t>(cfg.v))
            throw std::invalid_argument("train: token vocab " + std::to_string(tokens[u].vocab) +
                                        " does not match config v=" + std::to_string(cfg.v));
    }

    std::vector<size_t> eligible;
    for (size_t u = 0; u < corpus.features.size(); ++u)
        if (corpus.features[u].t() >= cfg.segment_len) eligible.push_back(u);
    if (eligible.empty())
        throw std::invalid_argument("train: no utterance reaches segment_len=" +
                                    std::to_string(cfg.segment_len));

    TrainState state = init_train_state(cfg);

    std::ofstream log;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        save_config(cfg, (fs::path(out_dir) / "config.ini").string());
        log.open((fs::path(out_dir) / "train_log.jsonl").string(), std::ios::trunc);
        if (!log) throw std::runtime_error(out_dir + ": cannot open training log");
    }

    for (int64_t step = 0; step < cfg.optimizer.total_steps; ++step) {
        Batch batch;
        batch.reserve(cfg.batch_size);
        for (int b = 0; b < cfg.batch_size; ++b) {
            const size_t u = eligible[state.rng_batch.uniform_int(eligible.size())];
            const int t_total = corpus.features[u].t();
            const int start = static_cast<int>(state.rng_batch.uniform_int(
                static_cast<uint64_t>(t_total - cfg.segment_len + 1)));
            Segment seg;
            seg.features = Mat(cfg.segment_len, cfg.d_in);
            for (int t = 0; t < cfg.segment_len; ++t)
                std::copy_n(corpus.features[u].frames.row(start + t), cfg.d_in,
                            seg.features.row(t));
            seg.tokens.vocab = tokens[u].vocab;
            seg.tokens.tokens.assign(tokens[u].tokens.begin() + start,
                                     tokens[u].tokens.begin() + start + cfg.segment_len);
            batch.push_back(std::move(seg));
        }

        const StepReport rep = backward_and_step(state, batch);
        if (log_out) log_out->push_back(rep);
        if (log) log << report_json(rep).dump() << "\n";

        if (!out_dir.empty() && cfg.checkpoint_every > 0 &&
            state.step % cfg.checkpoint_every == 0 && state.step < cfg.optimizer.total_steps) {
            save_checkpoint(state, checkpoint_stem(out_dir, state.step, false));
        }
    }

    if (!out_dir.empty()) {
        save_checkpoint(state, checkpoint_stem(out_dir, state.step, true));
        log.flush();
        if (!log) throw std::runtime_error(out_dir + ": training log write failed");
    }
    return state;
}

void save_checkpoint(const TrainState& state, const std::string& stem) {
    NamedTensors tensors;
    visit_params(state.params,
                 [&](const std::string& n, const Mat& t) { tensors.emplace_back(n, t); });
    visit_params(state.adam_m, [&](const std::string& n, const Mat& t) {
        tensors.emplace_back("adam_m." + n, t);
    });
    visit_params(state.adam_v, [&](const std::string& n, const Mat& t) {
        tensors.emplace_back("adam_v." + n, t);
    });
    for (size_t i = 0; i < state.dead_counters.size(); ++i) {
        Mat c(1, static_cast<int>(state.dead_counters[i].size()));
        for (size_t k = 0; k < state.dead_counters[i].size(); ++k)
            c.data[k] = static_cast<double>(state.dead_counters[i][k]);
        tensors.emplace_back("dead_counters" + std::to_string(i), std::move(c));
    }
    save_params(tensors, stem + ".stap");

    nlohmann::ordered_json manifest;
    manifest["step"] = state.step;
    manifest["stage"] = state.stage;
    manifest["seed"] = state.cfg.seed;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(config_hash(state.cfg)));
    manifest["config_hash"] = hash;
    manifest["config"] = format_config(state.cfg);
    manifest["rng"] = {{"mask", state.rng_mask.state},
                       {"batch", state.rng_batch.state},
                       {"reset", state.rng_reset.state}};
    std::ofstream out(stem + ".manifest.json");
    if (!out) throw std::runtime_error(stem + ".manifest.json: cannot open for writing");
    out << manifest.dump(2) << "\n";
    if (!out) throw std::runtime_error(stem + ".manifest.json: write failed");
}

TrainState load_checkpoint(const std::string& stem) {
    std::ifstream in(stem + ".manifest.json");
    if (!in) throw std::runtime_error(stem + ".manifest.json: cannot open");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const std::exception& e) {
        throw std::runtime_error(stem + ".manifest.json: bad JSON: " + e.what());
    }
    const ModelConfig cfg = parse_config(manifest.at("config").get<std::string>());

    TrainState state = init_train_state(cfg);
    state.step = manifest.at("step").get<int64_t>();
    state.stage = manifest.at("stage").get<int>();
    state.rng_mask.state = manifest.at("rng").at("mask").get<uint64_t>();
    state.rng_batch.state = manifest.at("rng").at("batch").get<uint64_t>();
    state.rng_reset.state = manifest.at("rng").at("reset").get<uint64_t>();

    NamedTensors tensors = load_params(stem + ".stap");
    auto take = [&](const std::string& name, Mat& dst) {
        for (auto& [n, t] : tensors) {
            if (n == name) {
                if (!t.same_shape(dst))
                    throw std::runtime_error(stem + ".stap: tensor " + name + " has shape " +
                                             std::to_string(t.rows) + "x" + std::to_string(t.cols) +
                                             ", expected " + std::to_string(dst.rows) + "x" +
                                             std::to_string(dst.cols));
                dst = t;
                return;
            }
        }
        throw std::runtime_error(stem + ".stap: missing tensor " + name);
    };
    visit_params(state.params, [&](const std::string& n, Mat& t) { take(n, t); });
    visit_params(state.adam_m, [&](const std::string& n, Mat& t) { take("adam_m." + n, t); });
    visit_params(state.adam_v, [&](const std::string& n, Mat& t) { take("adam_v." + n, t); });
    for (size_t i = 0; i < state.dead_counters.size(); ++i) {
        Mat c(1, static_cast<int>(state.dead_counters[i].size()));
        take("dead_counters" + std::to_string(i), c);
        for (size_t k = 0; k < state.dead_counters[i].size(); ++k)
            state.dead_counters[i][k] = static_cast<int>(c.data[k]);
    }
    return state;
}

EncodeResult encode_utterance(const TrainState& state, const Mat& features,
                              const TokenSequence* external_tokens) {
    const ModelConfig& cfg = state.cfg;
    EncodeResult res;
    res.e = context_map_forward(state.params.codec.encoder, features);
    res.z = cfg.toggles.bt ? context_map_forward(state.params.codec.bottleneck, res.e) : res.e;
    if (cfg.toggles.sta) {
        if (external_tokens != nullptr) {
            res.tokens_used = *external_tokens;
        } else {
            res.tokens_used = predict_tokens(spd_forward(res.e, state.params.spd));
        }
        res.q = rvq_sta_encode(LatentSequence{res.z}, res.tokens_used, state.params.codebooks);
    } else {
        res.q = rvq_encode(LatentSequence{res.z}, state.params.codebooks);
        res.tokens_used = TokenSequence{res.q.codes[0], static_cast<uint32_t>(cfg.k)};
    }
    return res;
}

Mat decode_codes(const TrainState& state, const std::vector<std::vector<uint32_t>>& codes) {
    const LatentSequence zhat = rvq_decode(codes, state.params.codebooks);
    return context_map_forward(state.params.codec.decoder, zhat.frames);
}

}  // namespace stavq
