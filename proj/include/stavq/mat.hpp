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

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace stavq {

// Dense row-major matrix of doubles. All in-memory numerics run in f64;
// on-disk storage is f32 (see io.hpp). Kept deliberately minimal: loops in
// this codebase control their own summation order, which several exactness
// guarantees depend on.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {
        if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative shape");
    }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    size_t size() const { return data.size(); }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    static Mat zeros_like(const Mat& m) { return Mat(m.rows, m.cols); }

    bool operator==(const Mat& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

inline bool all_finite(const Mat& m) {
    for (double v : m.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

inline double squared_distance(const double* a, const double* b, int n) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

// Index of the row of m nearest to x in squared Euclidean distance.
// Ties break to the lowest index.
inline std::pair<int, double> nearest_row(const Mat& m, const double* x) {
    if (m.rows < 1) throw std::invalid_argument("nearest_row: empty matrix");
    int best = 0;
    double best_d = squared_distance(m.row(0), x, m.cols);
    for (int k = 1; k < m.rows; ++k) {
        const double d = squared_distance(m.row(k), x, m.cols);
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return {best, best_d};
}

}  // namespace stavq
