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
#include <vector>

namespace stavq {

struct MaskAxisConfig {
    double prob = 0.5;
    int num_spans = 2;
    int span_len = 10;
};

struct MaskConfig {
    MaskAxisConfig temporal{0.5, 2, 10};
    MaskAxisConfig feature{0.5, 2, 8};
};

struct OptimizerConfig {
    double base_lr = 3e-4;
    int64_t warmup_steps = 4000;
    int64_t total_steps = 250000;
    double beta1 = 0.5;
    double beta2 = 0.9;
};

struct Toggles {
    bool sta = true;   // first-layer code forced to the semantic token
    bool bt = true;    // context-windowed bottleneck between encoder and quantizer
    bool tc = true;    // layer-1 codebook trainable
    bool mask = true;  // span masking on the token-classifier input
};

struct ModelConfig {
    int d_in = 128;  // input feature dimension
    int d = 128;     // latent dimension
    int n_q = 8;     // quantizer layers
    int k = 1024;    // entries per codebook
    int v = 1024;    // tokenizer vocabulary
    double lambda_spd = 5.0;
    MaskConfig mask;
    OptimizerConfig optimizer;
    int64_t stage1_steps = 90000;
    Toggles toggles;
    uint64_t seed = 0;

    // Artifact-level knobs.
    int segment_len = 150;
    int batch_size = 8;
    int64_t checkpoint_every = 1000;
    int spd_context_radius = 2;
    bool spd_grad_to_encoder = true;
    double commitment_weight = 0.25;
    int dead_entry_steps = 200;
};

// Returns the full list of violated invariants, one message per field.
// Empty result means the config is valid.
std::vector<std::string> validate_config(const ModelConfig& cfg);

// Throws std::invalid_argument listing every violation.
void require_valid(const ModelConfig& cfg);

// INI-style key/value text format; key names are documented in the README.
ModelConfig parse_config(const std::string& text);
std::string format_config(const ModelConfig& cfg);
ModelConfig load_config(const std::string& path);
void save_config(const ModelConfig& cfg, const std::string& path);

// FNV-1a over the canonical text form; used to stamp checkpoints.
uint64_t config_hash(const ModelConfig& cfg);

}  // namespace stavq
