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
#include <stdexcept>
#include <string>
#include <vector>

#include "stavq/mat.hpp"

namespace stavq {

// T x D_in frames of real-valued features. Also houses encoder outputs when
// those are treated as plain feature matrices (masking, classification).
struct FeatureSequence {
    Mat frames;

    int t() const { return frames.rows; }
    int dim() const { return frames.cols; }

    void check() const {
        if (frames.rows < 1 || frames.cols < 1)
            throw std::invalid_argument("FeatureSequence: T and D_in must be >= 1");
        if (!all_finite(frames))
            throw std::invalid_argument("FeatureSequence: non-finite value");
    }
};

// T x D frames in latent space (pre- or post-quantization).
struct LatentSequence {
    Mat frames;

    int t() const { return frames.rows; }
    int dim() const { return frames.cols; }

    void check() const {
        if (frames.rows < 1 || frames.cols < 1)
            throw std::invalid_argument("LatentSequence: T and D must be >= 1");
        if (!all_finite(frames))
            throw std::invalid_argument("LatentSequence: non-finite value");
    }
};

struct TokenSequence {
    std::vector<uint32_t> tokens;
    uint32_t vocab = 0;

    size_t size() const { return tokens.size(); }

    void check() const {
        if (vocab == 0) throw std::invalid_argument("TokenSequence: vocab must be >= 1");
        for (uint32_t tok : tokens) {
            if (tok >= vocab)
                throw std::invalid_argument("TokenSequence: token " + std::to_string(tok) +
                                            " out of range for vocab " + std::to_string(vocab));
        }
    }
};

// K x D table of candidate vectors for one quantizer layer.
struct Codebook {
    Mat entries;

    int size() const { return entries.rows; }
    int dim() const { return entries.cols; }

    void check() const {
        if (entries.rows < 1 || entries.cols < 1)
            throw std::invalid_argument("Codebook: K and D must be >= 1");
        if (!all_finite(entries))
            throw std::invalid_argument("Codebook: non-finite entry");
    }
};

// Ordered quantizer layers C_1 .. C_{N_q}, all sharing the entry dimension.
struct CodebookStack {
    std::vector<Codebook> layers;

    int num_layers() const { return static_cast<int>(layers.size()); }
    int dim() const { return layers.empty() ? 0 : layers.front().dim(); }

    void check() const {
        if (layers.empty()) throw std::invalid_argument("CodebookStack: N_q must be >= 1");
        const int d = layers.front().dim();
        for (const auto& cb : layers) {
            cb.check();
            if (cb.dim() != d)
                throw std::invalid_argument("CodebookStack: layers must share entry dimension");
        }
    }
};

}  // namespace stavq
