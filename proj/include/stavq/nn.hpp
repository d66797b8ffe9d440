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

#include <vector>

#include "stavq/mat.hpp"
#include "stavq/rng.hpp"

namespace stavq {

// Per-frame affine map with a +-radius context window and tanh output:
//
//   y_t = tanh( b + sum_{j=-r..r} W_j * x_{t+j} )
//
// Frames outside [0, T) contribute nothing (zero padding). radius = 0 is a
// plain per-frame affine + nonlinearity. All parametric maps in this project
// (encoder, bottleneck, decoder, token classifier) are instances of this one
// shape, which keeps the manual backward pass in a single place.
struct ContextMap {
    int in_dim = 0;
    int out_dim = 0;
    int radius = 0;
    std::vector<Mat> w;  // 2*radius+1 matrices, each out_dim x in_dim; w[j] is offset j-radius
    Mat b;               // 1 x out_dim

    static ContextMap create(int in_dim, int out_dim, int radius);

    // Uniform init in [-s, s] with s = 1/sqrt(fan_in), fan_in counting the
    // whole context window.
    void init(Rng& rng);

    ContextMap grads_like() const;  // same shapes, zero-filled
};

// Forward over a T x in_dim input; returns T x out_dim activations.
Mat context_map_forward(const ContextMap& map, const Mat& in);

// Accumulates parameter gradients into `grads` and, when d_in is non-null,
// input gradients into *d_in (also accumulated). `out` must be the activation
// matrix produced by context_map_forward for this `in`.
void context_map_backward(const ContextMap& map, const Mat& in, const Mat& out, const Mat& d_out,
                          ContextMap& grads, Mat* d_in);

}  // namespace stavq
