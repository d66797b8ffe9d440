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

#include "stavq/rvq.hpp"

#include <algorithm>
#include <stdexcept>

namespace stavq {

namespace {

// Shared encode path. When first_layer_tokens is non-null, layer 1 codes are
// assigned rather than searched.
QuantizationOutput encode_impl(const LatentSequence& z, const CodebookStack& stack,
                               const TokenSequence* first_layer_tokens) {
    z.check();
    stack.check();
    if (z.dim() != stack.dim())
        throw std::invalid_argument("rvq: latent dimension " + std::to_string(z.dim()) +
                                    " does not match codebook dimension " +
                                    std::to_string(stack.dim()));
    const int t_len = z.t();
    const int d = z.dim();
    const int n_q = stack.num_layers();

    if (first_layer_tokens != nullptr) {
        first_layer_tokens->check();
        if (static_cast<int>(first_layer_tokens->size()) != t_len)
            throw std::invalid_argument("rvq_sta_encode: token length " +
                                        std::to_string(first_layer_tokens->size()) +
                                        " does not match T=" + std::to_string(t_len));
        if (first_layer_tokens->vocab > static_cast<uint32_t>(stack.layers[0].size()))
            throw std::invalid_argument("rvq_sta_encode: vocab " +
                                        std::to_string(first_layer_tokens->vocab) +
                                        " exceeds first-layer codebook size " +
                                        std::to_string(stack.layers[0].size()));
    }

    QuantizationOutput out;
    out.codes.assign(n_q, std::vector<uint32_t>(t_len, 0));
    out.layer_q.assign(n_q, Mat(t_len, d));
    out.summed = Mat(t_len, d);
    out.final_residual = Mat(t_len, d);

    std::vector<double> residual(d);
    for (int t = 0; t < t_len; ++t) {
        std::copy_n(z.frames.row(t), d, residual.data());
        for (int i = 0; i < n_q; ++i) {
            const Codebook& cb = stack.layers[i];
            uint32_t idx;
            if (i == 0 && first_layer_tokens != nullptr) {
                idx = first_layer_tokens->tokens[t];
            } else {
                idx = static_cast<uint32_t>(nearest_row(cb.entries, residual.data()).first);
            }
            out.codes[i][t] = idx;
            const double* entry = cb.entries.row(static_cast<int>(idx));
            std::copy_n(entry, d, out.layer_q[i].row(t));
            for (int j = 0; j < d; ++j) residual[j] -= entry[j];
        }
        // Accumulate the sum layer 1 -> N_q, then take the residual with one
        // subtraction; this is the fixed evaluation order the output
        // identities are stated in.
        double* sum_row = out.summed.row(t);
        for (int i = 0; i < n_q; ++i) {
            const double* lrow = out.layer_q[i].row(t);
            for (int j = 0; j < d; ++j) sum_row[j] += lrow[j];
        }
        double* res_row = out.final_residual.row(t);
        const double* z_row = z.frames.row(t);
        for (int j = 0; j < d; ++j) res_row[j] = z_row[j] - sum_row[j];
    }
    return out;
}

}  // namespace

NearestEntry vq_nearest(const std::vector<double>& r, const Codebook& cb) {
    cb.check();
    if (static_cast<int>(r.size()) != cb.dim())
        throw std::invalid_argument("vq_nearest: vector dimension " + std::to_string(r.size()) +
                                    " does not match codebook dimension " +
                                    std::to_string(cb.dim()));
    const auto [idx, d2] = nearest_row(cb.entries, r.data());
    (void)d2;
    NearestEntry ne;
    ne.index = static_cast<uint32_t>(idx);
    ne.quantized.assign(cb.entries.row(idx), cb.entries.row(idx) + cb.dim());
    return ne;
}

QuantizationOutput rvq_encode(const LatentSequence& z, const CodebookStack& stack) {
    return encode_impl(z, stack, nullptr);
}

QuantizationOutput rvq_sta_encode(const LatentSequence& z, const TokenSequence& c_s,
                                  const CodebookStack& stack) {
    return encode_impl(z, stack, &c_s);
}

LatentSequence rvq_decode(const std::vector<std::vector<uint32_t>>& codes,
                          const CodebookStack& stack) {
    stack.check();
    if (codes.size() != static_cast<size_t>(stack.num_layers()))
        throw std::invalid_argument("rvq_decode: expected " + std::to_string(stack.num_layers()) +
                                    " code streams, got " + std::to_string(codes.size()));
    if (codes.empty() || codes[0].empty())
        throw std::invalid_argument("rvq_decode: empty code stream");
    const size_t t_len = codes[0].size();
    for (size_t i = 0; i < codes.size(); ++i) {
        if (codes[i].size() != t_len)
            throw std::invalid_argument("rvq_decode: code stream length mismatch at layer " +
                                        std::to_string(i + 1));
        const uint32_t k = static_cast<uint32_t>(stack.layers[i].size());
        for (uint32_t c : codes[i]) {
            if (c >= k)
                throw std::invalid_argument("rvq_decode: code " + std::to_string(c) +
                                            " out of range for layer " + std::to_string(i + 1) +
                                            " (K=" + std::to_string(k) + ")");
        }
    }

    const int d = stack.dim();
    LatentSequence out{Mat(static_cast<int>(t_len), d)};
    for (size_t t = 0; t < t_len; ++t) {
        double* row = out.frames.row(static_cast<int>(t));
        for (size_t i = 0; i < codes.size(); ++i) {
            const double* entry = stack.layers[i].entries.row(static_cast<int>(codes[i][t]));
            for (int j = 0; j < d; ++j) row[j] += entry[j];
        }
    }
    return out;
}

VqLosses vq_losses(const LatentSequence& z, const QuantizationOutput& out) {
    if (!z.frames.same_shape(out.summed))
        throw std::invalid_argument("vq_losses: shape mismatch between z and quantized output");
    const int t_len = z.t();
    double acc = 0.0;
    for (int t = 0; t < t_len; ++t)
        acc += squared_distance(z.frames.row(t), out.summed.row(t), z.dim());
    const double mean = acc / t_len;
    return VqLosses{mean, mean};
}

}  // namespace stavq
