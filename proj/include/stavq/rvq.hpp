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

#include "stavq/types.hpp"

namespace stavq {

// Result of quantizing a T x D latent sequence with an N_q-layer stack.
//
// summed is the left-to-right sum of the per-layer outputs, and
// final_residual is computed as z - summed with a single subtraction, so both
//   summed[t]  == layer_q[0][t] + layer_q[1][t] + ... (in that order)
//   z[t] - summed[t] == final_residual[t]
// hold bit-exactly. The per-layer search itself follows the residual
// recursion r_i = r_{i-1} - zhat_i.
struct QuantizationOutput {
    std::vector<std::vector<uint32_t>> codes;  // [n_q][t]
    std::vector<Mat> layer_q;                  // n_q matrices, each T x D
    Mat summed;                                // T x D
    Mat final_residual;                        // T x D

    int num_layers() const { return static_cast<int>(codes.size()); }
    int t() const { return summed.rows; }

    bool operator==(const QuantizationOutput& o) const {
        return codes == o.codes && layer_q == o.layer_q && summed == o.summed &&
               final_residual == o.final_residual;
    }
};

struct NearestEntry {
    uint32_t index = 0;
    std::vector<double> quantized;
};

// Nearest codebook entry in squared Euclidean distance, ties to the lowest
// index.
NearestEntry vq_nearest(const std::vector<double>& r, const Codebook& cb);

// Standard residual VQ: every layer, including the first, searches for the
// nearest entry of its codebook.
QuantizationOutput rvq_encode(const LatentSequence& z, const CodebookStack& stack);

// Residual VQ with semantic token assignment: the first-layer code of frame t
// is forced to c_s[t] (no search); layers 2..N_q quantize the residuals as in
// rvq_encode.
QuantizationOutput rvq_sta_encode(const LatentSequence& z, const TokenSequence& c_s,
                                  const CodebookStack& stack);

// Reconstruction from codes: per-layer lookups summed layer 1 -> N_q.
LatentSequence rvq_decode(const std::vector<std::vector<uint32_t>>& codes,
                          const CodebookStack& stack);

// Mean over frames of the squared distance between z and the quantized sum.
// The two values are numerically identical; they differ in which side of the
// difference is treated as constant during training (codebook: gradient to
// the entries; commitment: gradient to z).
struct VqLosses {
    double codebook = 0.0;
    double commitment = 0.0;
};

VqLosses vq_losses(const LatentSequence& z, const QuantizationOutput& out);

}  // namespace stavq
