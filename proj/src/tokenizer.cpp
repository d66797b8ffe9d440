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

#include "stavq/tokenizer.hpp"

#include <algorithm>
#include <stdexcept>

#include "stavq/rng.hpp"

namespace stavq {

namespace {

// k-means++ seeding: first centroid uniform, each next drawn with probability
// proportional to the squared distance to the nearest chosen centroid.
Mat kmeanspp_init(const Mat& pts, int k, Rng& rng) {
    const int n = pts.rows;
    const int d = pts.cols;
    Mat centroids(k, d);
    std::vector<double> dist2(n, 0.0);

    int first = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n)));
    std::copy_n(pts.row(first), d, centroids.row(0));

    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
            double best = squared_distance(pts.row(i), centroids.row(0), d);
            for (int j = 1; j < c; ++j)
                best = std::min(best, squared_distance(pts.row(i), centroids.row(j), d));
            dist2[i] = best;
            total += best;
        }
        int pick;
        if (total <= 0.0) {
            pick = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(n)));
        } else {
            double r = rng.uniform() * total;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                r -= dist2[i];
                if (r <= 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        std::copy_n(pts.row(pick), d, centroids.row(c));
    }
    return centroids;
}

double assign_all(const Mat& pts, const Mat& centroids, std::vector<int>& assign) {
    double inertia = 0.0;
    for (int i = 0; i < pts.rows; ++i) {
        auto [idx, d2] = nearest_row(centroids, pts.row(i));
        assign[i] = idx;
        inertia += d2;
    }
    return inertia;
}

// Lloyd's is a local method; a handful of seeded k-means++ restarts keeps the
// returned partition at or near the global optimum on small instances. All
// restarts draw from one sequential stream, so the result is still a pure
// function of (points, k, seed).
constexpr int kRestarts = 8;

KMeansModel kmeans_fit_once(const Mat& pts, int k, int max_iters, double tol, Rng& rng) {
    const int n = pts.rows;
    const int d = pts.cols;

    Mat centroids = kmeanspp_init(pts, k, rng);
    std::vector<int> assign(n, 0);
    double inertia = assign_all(pts, centroids, assign);

    KMeansModel model;
    model.inertia_history.push_back(inertia);

    int iters = 0;
    for (; iters < max_iters; ++iters) {
        // Means of each cluster.
        Mat sums(k, d);
        std::vector<int> counts(k, 0);
        for (int i = 0; i < n; ++i) {
            double* srow = sums.row(assign[i]);
            const double* p = pts.row(i);
            for (int j = 0; j < d; ++j) srow[j] += p[j];
            counts[assign[i]]++;
        }
        for (int c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            double* srow = sums.row(c);
            for (int j = 0; j < d; ++j) centroids.at(c, j) = srow[j] / counts[c];
        }

        // Re-seed empty clusters to the farthest point from its centroid so
        // every token of the vocabulary stays live. Each empty cluster takes
        // a distinct point.
        std::vector<bool> taken(n, false);
        for (int c = 0; c < k; ++c) {
            if (counts[c] != 0) continue;
            int far_i = -1;
            double far_d = -1.0;
            for (int i = 0; i < n; ++i) {
                if (taken[i]) continue;
                const double d2 = squared_distance(pts.row(i), centroids.row(assign[i]), d);
                if (d2 > far_d) {
                    far_d = d2;
                    far_i = i;
                }
            }
            if (far_i >= 0) {
                std::copy_n(pts.row(far_i), d, centroids.row(c));
                taken[far_i] = true;
            }
        }

        const double new_inertia = assign_all(pts, centroids, assign);
        if (new_inertia > inertia * (1.0 + 1e-12) + 1e-300)
            throw std::logic_error("kmeans_fit: inertia increased across an iteration");
        const double improvement = inertia - new_inertia;
        inertia = new_inertia;
        model.inertia_history.push_back(inertia);
        if (improvement < tol || improvement <= 0.0) {
            ++iters;
            break;
        }
    }

    model.centroids = Codebook{std::move(centroids)};
    model.iterations_run = iters;
    model.inertia = inertia;
    return model;
}

}  // namespace

KMeansModel kmeans_fit(const FeatureSequence& points, int k, int max_iters, double tol,
                       uint64_t seed) {
    points.check();
    if (k < 1) throw std::invalid_argument("kmeans_fit: k must be >= 1");
    if (points.t() < k)
        throw std::invalid_argument("kmeans_fit: fewer points (" + std::to_string(points.t()) +
                                    ") than clusters (" + std::to_string(k) + ")");
    if (max_iters < 1) throw std::invalid_argument("kmeans_fit: max_iters must be >= 1");
    if (tol < 0.0) throw std::invalid_argument("kmeans_fit: tol must be >= 0");

    Rng rng(seed);
    KMeansModel best = kmeans_fit_once(points.frames, k, max_iters, tol, rng);
    for (int r = 1; r < kRestarts; ++r) {
        KMeansModel cand = kmeans_fit_once(points.frames, k, max_iters, tol, rng);
        if (cand.inertia < best.inertia) best = std::move(cand);
    }
    return best;
}

TokenSequence kmeans_assign(const FeatureSequence& points, const KMeansModel& model) {
    points.check();
    model.centroids.check();
    if (points.dim() != model.centroids.dim())
        throw std::invalid_argument("kmeans_assign: dimension mismatch (points " +
                                    std::to_string(points.dim()) + ", centroids " +
                                    std::to_string(model.centroids.dim()) + ")");
    TokenSequence seq;
    seq.vocab = static_cast<uint32_t>(model.centroids.size());
    seq.tokens.reserve(points.t());
    for (int i = 0; i < points.t(); ++i)
        seq.tokens.push_back(
            static_cast<uint32_t>(nearest_row(model.centroids.entries, points.frames.row(i)).first));
    return seq;
}

}  // namespace stavq
