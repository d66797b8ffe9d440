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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stavq/config.hpp"
#include "stavq/corpus.hpp"
#include "stavq/io.hpp"
#include "stavq/metrics.hpp"
#include "stavq/rng.hpp"
#include "stavq/spd.hpp"
#include "stavq/tokenizer.hpp"
#include "stavq/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

using namespace stavq;

struct ConfigOverrides {
    std::optional<uint64_t> seed;
    std::optional<int> k;
    std::optional<int> layers;
    std::optional<int64_t> stage1_steps;
    std::optional<int64_t> total_steps;
    std::optional<bool> sta, bt, tc, mask;

    void apply(ModelConfig& cfg) const {
        if (seed) cfg.seed = *seed;
        if (k) cfg.k = *k;
        if (layers) cfg.n_q = *layers;
        if (stage1_steps) cfg.stage1_steps = *stage1_steps;
        if (total_steps) cfg.optimizer.total_steps = *total_steps;
        if (sta) cfg.toggles.sta = *sta;
        if (bt) cfg.toggles.bt = *bt;
        if (tc) cfg.toggles.tc = *tc;
        if (mask) cfg.toggles.mask = *mask;
    }
};

void add_override_flags(CLI::App* cmd, ConfigOverrides& ov) {
    cmd->add_option("--seed", ov.seed, "Override the config seed");
    cmd->add_option("--k", ov.k, "Override the per-layer codebook size");
    cmd->add_option("--layers", ov.layers, "Override the number of RVQ layers");
    cmd->add_option("--stage1-steps", ov.stage1_steps, "Override stage-1 step count");
    cmd->add_option("--total-steps", ov.total_steps, "Override total step count");
    cmd->add_option("--toggle-sta", ov.sta, "Semantic token assignment on/off");
    cmd->add_option("--toggle-bt", ov.bt, "Bottleneck on/off");
    cmd->add_option("--toggle-tc", ov.tc, "Trainable layer-1 codebook on/off");
    cmd->add_option("--toggle-mask", ov.mask, "Classifier input masking on/off");
}

std::string checkpoint_stem_of(std::string path) {
    if (path.size() > 5 && path.substr(path.size() - 5) == ".stap")
        path = path.substr(0, path.size() - 5);
    return path;
}

FeatureSequence concat_corpus_frames(const Corpus& corpus) {
    size_t total = 0;
    for (const auto& f : corpus.features) total += static_cast<size_t>(f.t());
    Mat all(static_cast<int>(total), corpus.d_in);
    int row = 0;
    for (const auto& f : corpus.features)
        for (int t = 0; t < f.t(); ++t)
            std::copy_n(f.frames.row(t), corpus.d_in, all.row(row++));
    return FeatureSequence{all};
}

KMeansModel load_kmeans_model(const std::string& path) {
    const CodebookStack stack = load_codebooks(path);
    if (stack.num_layers() != 1)
        throw std::runtime_error(path + ": expected a single-layer codebook for a k-means model");
    KMeansModel model;
    model.centroids = stack.layers[0];
    return model;
}

void emit(const ordered_json& j, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error(out_path + ": cannot open for writing");
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error(out_path + ": write failed");
}

// ---------------------------------------------------------------------------

int cmd_gen_corpus(const std::string& out_dir, int utterances, int frames, int dim, int clusters,
                   double center_scale, double noise, uint64_t seed) {
    if (utterances < 1 || frames < 1 || dim < 1 || clusters < 1)
        throw std::invalid_argument("gen-corpus: counts must be >= 1");
    fs::create_directories(out_dir);
    Rng rng(derive_seed(seed, "corpus"));
    Mat centers(clusters, dim);
    for (double& v : centers.data) v = rng.uniform(-center_scale, center_scale);

    CorpusManifest manifest;
    manifest.d_in = dim;
    manifest.vocab = 0;
    for (int u = 0; u < utterances; ++u) {
        Mat feats(frames, dim);
        int t = 0;
        while (t < frames) {
            // Cluster identity persists over short runs, like phone-scale
            // segments.
            const int run = 5 + static_cast<int>(rng.uniform_int(16));
            const int cluster = static_cast<int>(rng.uniform_int(clusters));
            for (int i = 0; i < run && t < frames; ++i, ++t) {
                for (int j = 0; j < dim; ++j)
                    feats.at(t, j) = centers.at(cluster, j) + noise * rng.normal();
            }
        }
        char name[32];
        std::snprintf(name, sizeof(name), "u%04d.staf", u);
        const std::string path = (fs::path(out_dir) / name).string();
        save_features(FeatureSequence{feats}, path);
        manifest.utterances.push_back({path, std::nullopt});
    }
    save_manifest(manifest, (fs::path(out_dir) / "manifest.json").string());
    std::cout << "wrote " << utterances << " utterances to " << out_dir << "\n";
    return 0;
}

int cmd_kmeans_fit(const std::string& corpus_path, int k, int iters, double tol, uint64_t seed,
                   const std::string& out_path, bool json) {
    const Corpus corpus = load_corpus_file(corpus_path);
    const FeatureSequence all = concat_corpus_frames(corpus);
    const KMeansModel model = kmeans_fit(all, k, iters, tol, derive_seed(seed, "tokenizer"));
    CodebookStack stack;
    stack.layers.push_back(model.centroids);
    save_codebooks(stack, out_path);
    ordered_json j;
    j["frames"] = all.t();
    j["k"] = k;
    j["iterations"] = model.iterations_run;
    j["inertia"] = model.inertia;
    j["model"] = out_path;
    if (json) std::cout << j.dump(2) << "\n";
    else
        std::cout << "k-means: " << all.t() << " frames, k=" << k << ", "
                  << model.iterations_run << " iterations, inertia " << model.inertia << "\n";
    return 0;
}

int cmd_tokenize(const std::string& corpus_path, const std::string& model_path,
                 const std::string& out_dir) {
    const CorpusManifest in_manifest = load_manifest(corpus_path);
    const Corpus corpus = load_corpus(in_manifest);
    const KMeansModel model = load_kmeans_model(model_path);
    fs::create_directories(out_dir);

    CorpusManifest out_manifest;
    out_manifest.d_in = corpus.d_in;
    out_manifest.vocab = static_cast<uint32_t>(model.centroids.size());
    for (size_t u = 0; u < corpus.features.size(); ++u) {
        const TokenSequence toks = kmeans_assign(corpus.features[u], model);
        const std::string stem = fs::path(in_manifest.utterances[u].feature_path).stem().string();
        const std::string tok_path = (fs::path(out_dir) / (stem + ".stat")).string();
        save_tokens(toks, tok_path);
        out_manifest.utterances.push_back({in_manifest.utterances[u].feature_path, tok_path});
    }
    save_manifest(out_manifest, (fs::path(out_dir) / "manifest.json").string());
    std::cout << "tokenized " << corpus.features.size() << " utterances (vocab "
              << out_manifest.vocab << ")\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& corpus_path,
              const std::string& out_dir, const std::string& tokenizer_path,
              const ConfigOverrides& ov, bool json) {
    ModelConfig cfg = load_config(config_path);
    ov.apply(cfg);
    require_valid(cfg);
    const Corpus corpus = load_corpus_file(corpus_path);
    std::optional<KMeansModel> tokenizer;
    if (!tokenizer_path.empty()) tokenizer = load_kmeans_model(tokenizer_path);

    std::vector<StepReport> log;
    const TrainState final_state =
        train(cfg, corpus, out_dir, &log, tokenizer ? &*tokenizer : nullptr);

    ordered_json j;
    j["steps"] = final_state.step;
    j["final_stage"] = final_state.stage;
    j["final_recon"] = log.empty() ? 0.0 : log.back().recon;
    j["final_total"] = log.empty() ? 0.0 : log.back().total;
    j["out_dir"] = out_dir;
    if (json) std::cout << j.dump(2) << "\n";
    else
        std::cout << "trained " << final_state.step << " steps; final recon "
                  << (log.empty() ? 0.0 : log.back().recon) << ", checkpoints in " << out_dir
                  << "\n";
    return 0;
}

std::vector<std::string> layer_files_of_prefix(const std::string& prefix) {
    std::vector<std::string> files;
    for (int i = 0;; ++i) {
        char suffix[24];
        std::snprintf(suffix, sizeof(suffix), ".q%02d.stat", i);
        const std::string path = prefix + suffix;
        if (!fs::exists(path)) break;
        files.push_back(path);
    }
    return files;
}

int cmd_encode(const std::string& checkpoint, const std::string& features_path,
               const std::string& out_prefix, const std::string& tokens_path) {
    const TrainState state = load_checkpoint(checkpoint_stem_of(checkpoint));
    const FeatureSequence feats = load_features(features_path);
    std::optional<TokenSequence> external;
    if (!tokens_path.empty()) external = load_tokens(tokens_path);
    const EncodeResult enc =
        encode_utterance(state, feats.frames, external ? &*external : nullptr);
    for (int i = 0; i < static_cast<int>(enc.q.codes.size()); ++i) {
        char suffix[24];
        std::snprintf(suffix, sizeof(suffix), ".q%02d.stat", i);
        save_tokens(TokenSequence{enc.q.codes[i], static_cast<uint32_t>(state.cfg.k)},
                    out_prefix + suffix);
    }
    std::cout << "encoded " << feats.t() << " frames into " << enc.q.codes.size()
              << " code streams at " << out_prefix << ".q*.stat (tokens: "
              << (external ? "external" : (state.cfg.toggles.sta ? "distilled" : "nearest"))
              << ")\n";
    return 0;
}

int cmd_decode(const std::string& checkpoint, const std::string& codes_prefix,
               const std::string& out_path) {
    const TrainState state = load_checkpoint(checkpoint_stem_of(checkpoint));
    const std::vector<std::string> files = layer_files_of_prefix(codes_prefix);
    if (files.empty())
        throw std::runtime_error(codes_prefix + ": no .q00.stat code stream found");
    std::vector<std::vector<uint32_t>> codes;
    for (const auto& f : files) codes.push_back(load_tokens(f).tokens);
    const Mat xhat = decode_codes(state, codes);
    save_features(FeatureSequence{xhat}, out_path);
    std::cout << "decoded " << xhat.rows << " frames from " << files.size()
              << " code streams into " << out_path << "\n";
    return 0;
}

int cmd_utilization(const std::vector<std::string>& code_args, const std::string& checkpoint,
                    const std::string& corpus_path, int k_override, const std::string& out_path) {
    std::optional<UtilizationAccumulator> acc;
    auto ensure = [&](int layers, int k) {
        if (!acc) acc.emplace(layers, k);
    };

    if (!checkpoint.empty()) {
        if (corpus_path.empty())
            throw std::invalid_argument("utilization: --checkpoint requires --corpus");
        const TrainState state = load_checkpoint(checkpoint_stem_of(checkpoint));
        const Corpus corpus = load_corpus_file(corpus_path);
        ensure(state.cfg.n_q, k_override > 0 ? k_override : state.cfg.k);
        for (size_t u = 0; u < corpus.features.size(); ++u) {
            const TokenSequence* gt = corpus.tokens[u] ? &*corpus.tokens[u] : nullptr;
            const EncodeResult enc = encode_utterance(state, corpus.features[u].frames, gt);
            acc->add(enc.q.codes);
        }
    } else if (!code_args.empty()) {
        for (const auto& arg : code_args) {
            std::vector<std::vector<uint32_t>> codes;
            int k_seen = 0;
            if (arg.size() > 5 && arg.substr(arg.size() - 5) == ".stat") {
                const TokenSequence toks = load_tokens(arg);
                codes.push_back(toks.tokens);
                k_seen = static_cast<int>(toks.vocab);
            } else {
                const std::vector<std::string> files = layer_files_of_prefix(arg);
                if (files.empty())
                    throw std::runtime_error(arg + ": no .q00.stat code stream found");
                for (const auto& f : files) {
                    const TokenSequence toks = load_tokens(f);
                    codes.push_back(toks.tokens);
                    k_seen = static_cast<int>(toks.vocab);
                }
            }
            ensure(static_cast<int>(codes.size()), k_override > 0 ? k_override : k_seen);
            acc->add(codes);
        }
    } else {
        throw std::invalid_argument("utilization: provide --codes or --checkpoint with --corpus");
    }

    emit(utilization_report_json(acc->report()), out_path);
    return 0;
}

int cmd_mask_demo(int frames, int dim, const MaskConfig& mask, int draws, uint64_t seed,
                  const std::string& out_path) {
    if (draws < 1) throw std::invalid_argument("mask-demo: --draws must be >= 1");
    Rng rng(derive_seed(seed, "masking"));
    int64_t t_active = 0, f_active = 0;
    int64_t t_masked_frames = 0, f_masked_dims = 0;
    for (int i = 0; i < draws; ++i) {
        const MaskPlan plan = sample_mask_plan(frames, dim, mask, rng);
        t_active += plan.temporal_active;
        f_active += plan.feature_active;
        std::vector<bool> t_hit(frames, false), f_hit(dim, false);
        for (const auto& s : plan.temporal_spans)
            for (int t = s.start; t < s.start + s.len; ++t) t_hit[t] = true;
        for (const auto& s : plan.feature_spans)
            for (int d = s.start; d < s.start + s.len; ++d) f_hit[d] = true;
        for (bool b : t_hit) t_masked_frames += b;
        for (bool b : f_hit) f_masked_dims += b;
    }
    ordered_json j;
    j["draws"] = draws;
    j["frames"] = frames;
    j["dim"] = dim;
    j["temporal"] = {{"prob", mask.temporal.prob},
                     {"num_spans", mask.temporal.num_spans},
                     {"span_len", mask.temporal.span_len},
                     {"activation_rate", static_cast<double>(t_active) / draws},
                     {"mean_masked_frames_given_active",
                      t_active ? static_cast<double>(t_masked_frames) / t_active : 0.0}};
    j["feature"] = {{"prob", mask.feature.prob},
                    {"num_spans", mask.feature.num_spans},
                    {"span_len", mask.feature.span_len},
                    {"activation_rate", static_cast<double>(f_active) / draws},
                    {"mean_masked_dims_given_active",
                     f_active ? static_cast<double>(f_masked_dims) / f_active : 0.0}};
    emit(j, out_path);
    return 0;
}

ModelConfig gradcheck_default_config() {
    ModelConfig cfg;
    cfg.d_in = 6;
    cfg.d = 5;
    cfg.n_q = 2;
    cfg.k = 7;
    cfg.v = 6;
    cfg.segment_len = 6;
    cfg.batch_size = 2;
    cfg.stage1_steps = 5;
    cfg.optimizer.total_steps = 20;
    cfg.optimizer.warmup_steps = 3;
    cfg.mask.temporal = {1.0, 1, 2};
    cfg.mask.feature = {1.0, 1, 2};
    return cfg;
}

int cmd_gradcheck(const std::string& config_path, uint64_t seed, double eps, int max_per_tensor,
                  bool json) {
    ModelConfig cfg = config_path.empty() ? gradcheck_default_config() : load_config(config_path);
    cfg.seed = seed;
    require_valid(cfg);
    if (cfg.d_in > 8 || cfg.d > 8 || cfg.v > 8 || cfg.k > 8 || cfg.segment_len > 6)
        throw std::invalid_argument("gradcheck: dims must stay toy-sized (<= 8, T <= 6)");

    TrainState state = init_train_state(cfg);
    Rng data_rng(derive_seed(seed, "gradcheck_data"));
    Batch batch;
    for (int b = 0; b < cfg.batch_size; ++b) {
        Segment seg;
        seg.features = Mat(cfg.segment_len, cfg.d_in);
        for (double& v : seg.features.data) v = data_rng.uniform(-0.8, 0.8);
        seg.tokens.vocab = static_cast<uint32_t>(cfg.v);
        for (int t = 0; t < cfg.segment_len; ++t)
            seg.tokens.tokens.push_back(static_cast<uint32_t>(data_rng.uniform_int(cfg.v)));
        batch.push_back(std::move(seg));
    }

    const GradCheckReport s1 =
        gradient_check(state, batch, eps, ForwardMode::stage1, max_per_tensor, seed);
    const GradCheckReport s2 =
        gradient_check(state, batch, eps, ForwardMode::stage2, max_per_tensor, seed);
    const bool pass = s1.max_rel_err < 1e-4 && s2.max_rel_err < 1e-4;

    ordered_json j;
    j["eps"] = eps;
    j["stage1"] = {{"max_rel_err", s1.max_rel_err},
                   {"checked", s1.checked},
                   {"skipped", s1.skipped}};
    j["stage2"] = {{"max_rel_err", s2.max_rel_err},
                   {"checked", s2.checked},
                   {"skipped", s2.skipped}};
    j["pass"] = pass;
    if (json) std::cout << j.dump(2) << "\n";
    else
        std::cout << "gradcheck stage1: max_rel_err " << s1.max_rel_err << " (" << s1.checked
                  << " checked, " << s1.skipped << " skipped)\n"
                  << "gradcheck stage2: max_rel_err " << s2.max_rel_err << " (" << s2.checked
                  << " checked, " << s2.skipped << " skipped)\n"
                  << (pass ? "PASS" : "FAIL") << "\n";
    return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Residual vector quantization toolkit with semantic token assignment"};
    app.require_subcommand(1);

    // gen-corpus
    std::string gc_out;
    int gc_utts = 200, gc_frames = 150, gc_dim = 8, gc_clusters = 8;
    double gc_scale = 0.8, gc_noise = 0.1;
    uint64_t gc_seed = 0;
    auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic Gaussian-cluster corpus");
    gen->add_option("--out", gc_out, "Output directory")->required();
    gen->add_option("--utterances", gc_utts, "Number of utterances");
    gen->add_option("--frames", gc_frames, "Frames per utterance");
    gen->add_option("--dim", gc_dim, "Feature dimension");
    gen->add_option("--clusters", gc_clusters, "Number of Gaussian clusters");
    gen->add_option("--center-scale", gc_scale, "Cluster centers drawn from [-s, s]");
    gen->add_option("--noise", gc_noise, "Per-frame Gaussian noise sigma");
    gen->add_option("--seed", gc_seed, "Corpus seed");

    // kmeans-fit
    std::string kf_corpus, kf_out;
    int kf_k = 1024, kf_iters = 100;
    double kf_tol = 1e-8;
    uint64_t kf_seed = 0;
    bool kf_json = false;
    auto* kfit = app.add_subcommand("kmeans-fit", "Fit the k-means semantic tokenizer");
    kfit->add_option("--corpus", kf_corpus, "Corpus manifest")->required();
    kfit->add_option("--k", kf_k, "Number of clusters");
    kfit->add_option("--iters", kf_iters, "Maximum Lloyd iterations");
    kfit->add_option("--tol", kf_tol, "Inertia improvement tolerance");
    kfit->add_option("--seed", kf_seed, "Seed");
    kfit->add_option("--out", kf_out, "Output model path (.stac)")->required();
    kfit->add_flag("--json", kf_json, "JSON summary");

    // tokenize
    std::string tk_corpus, tk_model, tk_out;
    auto* tok = app.add_subcommand("tokenize", "Assign semantic tokens to a corpus");
    tok->add_option("--corpus", tk_corpus, "Corpus manifest")->required();
    tok->add_option("--model", tk_model, "k-means model (.stac)")->required();
    tok->add_option("--out", tk_out, "Output directory for token files + manifest")->required();

    // train
    std::string tr_config, tr_corpus, tr_out, tr_tokenizer;
    ConfigOverrides tr_ov;
    bool tr_json = false;
    auto* trn = app.add_subcommand("train", "Run the two-stage training loop");
    trn->add_option("--config", tr_config, "Model config file")->required();
    trn->add_option("--corpus", tr_corpus, "Corpus manifest (tokenized)")->required();
    trn->add_option("--out", tr_out, "Output directory for checkpoints and log")->required();
    trn->add_option("--tokenizer", tr_tokenizer, "k-means model for untokenized utterances");
    add_override_flags(trn, tr_ov);
    trn->add_flag("--json", tr_json, "JSON summary");

    // encode
    std::string en_ckpt, en_features, en_out, en_tokens;
    auto* enc = app.add_subcommand("encode", "Encode features into per-layer code streams");
    enc->add_option("--checkpoint", en_ckpt, "Checkpoint stem or .stap path")->required();
    enc->add_option("--features", en_features, "Feature file (.staf)")->required();
    enc->add_option("--out", en_out, "Output prefix for .qNN.stat streams")->required();
    enc->add_option("--tokens", en_tokens, "External semantic tokens (.stat)");

    // decode
    std::string de_ckpt, de_codes, de_out;
    auto* dec = app.add_subcommand("decode", "Decode code streams back to features");
    dec->add_option("--checkpoint", de_ckpt, "Checkpoint stem or .stap path")->required();
    dec->add_option("--codes", de_codes, "Code stream prefix (reads prefix.qNN.stat)")->required();
    dec->add_option("--out", de_out, "Output feature file (.staf)")->required();

    // utilization
    std::vector<std::string> ut_codes;
    std::string ut_ckpt, ut_corpus, ut_out;
    int ut_k = 0;
    auto* util = app.add_subcommand("utilization", "Codebook utilization report (JSON)");
    util->add_option("--codes", ut_codes, "Code stream prefix(es) or single .stat token files");
    util->add_option("--checkpoint", ut_ckpt, "Checkpoint stem (encodes --corpus on the fly)");
    util->add_option("--corpus", ut_corpus, "Corpus manifest for --checkpoint mode");
    util->add_option("--k", ut_k, "Codebook size override");
    util->add_option("--out", ut_out, "Write the JSON report here instead of stdout");

    // mask-demo
    int md_frames = 150, md_dim = 128, md_draws = 10000;
    uint64_t md_seed = 0;
    MaskConfig md_mask;
    std::string md_out;
    auto* mask = app.add_subcommand("mask-demo", "Sample mask plans and report statistics");
    mask->add_option("--frames", md_frames, "Temporal axis length");
    mask->add_option("--dim", md_dim, "Feature axis length");
    mask->add_option("--draws", md_draws, "Number of sampled plans");
    mask->add_option("--seed", md_seed, "Seed");
    mask->add_option("--temporal-prob", md_mask.temporal.prob, "Temporal activation probability");
    mask->add_option("--temporal-spans", md_mask.temporal.num_spans, "Temporal spans per plan");
    mask->add_option("--temporal-span-len", md_mask.temporal.span_len, "Temporal span length");
    mask->add_option("--feature-prob", md_mask.feature.prob, "Feature activation probability");
    mask->add_option("--feature-spans", md_mask.feature.num_spans, "Feature spans per plan");
    mask->add_option("--feature-span-len", md_mask.feature.span_len, "Feature span length");
    mask->add_option("--out", md_out, "Write the JSON report here instead of stdout");

    // gradcheck
    std::string gd_config;
    uint64_t gd_seed = 17;
    double gd_eps = 1e-5;
    int gd_max = 40;
    bool gd_json = false;
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient verification");
    grad->add_option("--config", gd_config, "Toy config (defaults to a built-in one)");
    grad->add_option("--seed", gd_seed, "Seed");
    grad->add_option("--eps", gd_eps, "Central difference step");
    grad->add_option("--max-per-tensor", gd_max, "Sampled parameters per tensor (0 = all)");
    grad->add_flag("--json", gd_json, "JSON report");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen_corpus(gc_out, gc_utts, gc_frames, gc_dim, gc_clusters, gc_scale,
                                  gc_noise, gc_seed);
        if (kfit->parsed())
            return cmd_kmeans_fit(kf_corpus, kf_k, kf_iters, kf_tol, kf_seed, kf_out, kf_json);
        if (tok->parsed()) return cmd_tokenize(tk_corpus, tk_model, tk_out);
        if (trn->parsed())
            return cmd_train(tr_config, tr_corpus, tr_out, tr_tokenizer, tr_ov, tr_json);
        if (enc->parsed()) return cmd_encode(en_ckpt, en_features, en_out, en_tokens);
        if (dec->parsed()) return cmd_decode(de_ckpt, de_codes, de_out);
        if (util->parsed()) return cmd_utilization(ut_codes, ut_ckpt, ut_corpus, ut_k, ut_out);
        if (mask->parsed())
            return cmd_mask_demo(md_frames, md_dim, md_mask, md_draws, md_seed, md_out);
        if (grad->parsed()) return cmd_gradcheck(gd_config, gd_seed, gd_eps, gd_max, gd_json);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
