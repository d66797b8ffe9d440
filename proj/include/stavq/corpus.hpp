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

#include <optional>
#include <string>
#include <vector>

#include "stavq/types.hpp"

namespace stavq {

// JSON manifest listing the corpus:
//   { "d_in": 8, "vocab": 8,
//     "utterances": [ {"features": "u000.staf", "tokens": "u000.stat"}, ... ] }
// Relative paths resolve against the manifest's directory. vocab may be 0
// (or absent) for an untokenized corpus.
struct CorpusManifest {
    int d_in = 0;
    uint32_t vocab = 0;
    struct Entry {
        std::string feature_path;
        std::optional<std::string> token_path;
    };
    std::vector<Entry> utterances;
};

CorpusManifest load_manifest(const std::string& path);
void save_manifest(const CorpusManifest& manifest, const std::string& path);

// Fully loaded corpus; loading validates every file against the declared
// dimensions.
struct Corpus {
    int d_in = 0;
    uint32_t vocab = 0;
    std::vector<FeatureSequence> features;
    std::vector<std::optional<TokenSequence>> tokens;  // aligned with features
};

Corpus load_corpus(const CorpusManifest& manifest);
Corpus load_corpus_file(const std::string& manifest_path);

}  // namespace stavq
