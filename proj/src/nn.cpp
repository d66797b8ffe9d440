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

#include "stavq/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace stavq {

ContextMap ContextMap::create(int in_dim, int out_dim, int radius) {
    if (in_dim < 1 || out_dim < 1 || radius < 0)
        throw std::invalid_argument("ContextMap: bad shape");
    ContextMap m;
    m.in_dim = in_dim;
    m.out_dim = out_dim;
    m.radius = radius;
    m.w.assign(2 * radius + 1, Mat(out_dim, in_dim));
    m.b = Mat(1, out_dim);
    return m;
}

void ContextMap::init(Rng& rng) {
    const double fan_in = static_cast<double>(in_dim) * (2 * radius + 1);
    const double s = 1.0 / std::sqrt(fan_in);
    for (auto& wj : w)
        for (double& v : wj.data) v = rng.uniform(-s, s);
    for (double& v : b.data) v = rng.uniform(-s, s);
}

ContextMap ContextMap::grads_like() const {
    ContextMap g;
    g.in_dim = in_dim;
    g.out_dim = out_dim;
    g.radius = radius;
    g.w.assign(w.size(), Mat(out_dim, in_dim));
    g.b = Mat(1, out_dim);
    return g;
}

Mat context_map_forward(const ContextMap& map, const Mat& in) {
    if (in.cols != map.in_dim)
        throw std::invalid_argument("context_map_forward: input dim " + std::to_string(in.cols) +
                                    " does not match map in_dim " + std::to_string(map.in_dim));
    const int t_len = in.rows;
    Mat out(t_len, map.out_dim);
    for (int t = 0; t < t_len; ++t) {
        double* orow = out.row(t);
        for (int o = 0; o < map.out_dim; ++o) orow[o] = map.b.at(0, o);
        for (int j = 0; j < static_cast<int>(map.w.size()); ++j) {
            const int src = t + j - map.radius;
            if (src < 0 || src >= t_len) continue;
            const double* xrow = in.row(src);
            const Mat& wj = map.w[j];
            for (int o = 0; o < map.out_dim; ++o) {
                const double* wrow = wj.row(o);
                double acc = 0.0;
                for (int i = 0; i < map.in_dim; ++i) acc += wrow[i] * xrow[i];
                orow[o] += acc;
            }
        }
        for (int o = 0; o < map.out_dim; ++o) orow[o] = std::tanh(orow[o]);
    }
    return out;
}

void context_map_backward(const ContextMap& map, const Mat& in, const Mat& out, const Mat& d_out,
                          ContextMap& grads, Mat* d_in) {
    if (!out.same_shape(d_out))
        throw std::invalid_argument("context_map_backward: activation/gradient shape mismatch");
    const int t_len = in.rows;
    // d/du tanh(u) = 1 - y^2 with y the cached activation.
    Mat du(t_len, map.out_dim);
    for (int t = 0; t < t_len; ++t) {
        const double* yrow = out.row(t);
        const double* grow = d_out.row(t);
        double* drow = du.row(t);
        for (int o = 0; o < map.out_dim; ++o) drow[o] = grow[o] * (1.0 - yrow[o] * yrow[o]);
    }
    for (int t = 0; t < t_len; ++t) {
        const double* drow = du.row(t);
        for (int o = 0; o < map.out_dim; ++o) grads.b.at(0, o) += drow[o];
        for (int j = 0; j < static_cast<int>(map.w.size()); ++j) {
            const int src = t + j - map.radius;
            if (src < 0 || src >= t_len) continue;
            const double* xrow = in.row(src);
            Mat& gw = grads.w[j];
            for (int o = 0; o < map.out_dim; ++o) {
                double* gwrow = gw.row(o);
                const double d = drow[o];
                for (int i = 0; i < map.in_dim; ++i) gwrow[i] += d * xrow[i];
            }
            if (d_in != nullptr) {
                double* dxrow = d_in->row(src);
                const Mat& wj = map.w[j];
                for (int o = 0; o < map.out_dim; ++o) {
                    const double* wrow = wj.row(o);
                    const double d = drow[o];
                    for (int i = 0; i < map.in_dim; ++i) dxrow[i] += d * wrow[i];
                }
            }
        }
    }
}

}  // namespace stavq
