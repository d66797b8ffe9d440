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

struct KMeansModel {
    Codebook centroids;           // V x D_in
    int iterations_run = 0;
    double inertia = 0.0;         // final within-cluster sum of squared distances
    std::vector<double> inertia_history;  // one entry per assignment pass
};

// Lloyd's algorithm with k-means++ seeding. Deterministic given the seed.
// Stops when the inertia improvement drops below tol (or hits an exact fixed
// point), or after max_iters update passes. Empty clusters are re-seeded to
// the point currently farthest from its assigned centroid.
KMeansModel kmeans_fit(const FeatureSequence& points, int k, int max_iters, double tol,
                       uint64_t seed);

// Nearest-centroid assignment in squared Euclidean distance, ties to the
// lowest index. Output vocab equals the number of centroids.
TokenSequence kmeans_assign(const FeatureSequence& points, const KMeansModel& model);

}  // namespace stavq
