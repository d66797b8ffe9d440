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

#include "stavq/corpus.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "stavq/io.hpp"

namespace stavq {

namespace fs = std::filesystem;

CorpusManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open manifest");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": bad JSON: " + e.what());
    }
    CorpusManifest m;
    if (!j.contains("d_in") || !j.contains("utterances"))
        throw std::runtime_error(path + ": manifest requires d_in and utterances");
    m.d_in = j.at("d_in").get<int>();
    m.vocab = j.value("vocab", 0u);
    const fs::path base = fs::path(path).parent_path();
    for (const auto& u : j.at("utterances")) {
        CorpusManifest::Entry e;
        e.feature_path = (base / u.at("features").get<std::string>()).string();
        if (u.contains("tokens") && !u.at("tokens").is_null())
            e.token_path = (base / u.at("tokens").get<std::string>()).string();
        m.utterances.push_back(std::move(e));
    }
    return m;
}

void save_manifest(const CorpusManifest& manifest, const std::string& path) {
    nlohmann::ordered_json j;
    j["d_in"] = manifest.d_in;
    j["vocab"] = manifest.vocab;
    j["utterances"] = nlohmann::ordered_json::array();
    const fs::path base = fs::path(path).parent_path();
    for (const auto& e : manifest.utterances) {
        nlohmann::ordered_json u;
        u["features"] = fs::relative(e.feature_path, base).string();
        if (e.token_path) u["tokens"] = fs::relative(*e.token_path, base).string();
        j["utterances"].push_back(std::move(u));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error(path + ": write failed");
}

Corpus load_corpus(const CorpusManifest& manifest) {
    if (manifest.utterances.empty()) throw std::runtime_error("corpus: empty manifest");
    Corpus corpus;
    corpus.d_in = manifest.d_in;
    corpus.vocab = manifest.vocab;
    for (const auto& e : manifest.utterances) {
        FeatureSequence seq = load_features(e.feature_path);
        if (seq.dim() != manifest.d_in)
            throw std::runtime_error(e.feature_path + ": D=" + std::to_string(seq.dim()) +
                                     " does not match manifest d_in=" +
                                     std::to_string(manifest.d_in));
        std::optional<TokenSequence> toks;
        if (e.token_path) {
            toks = load_tokens(*e.token_path);
            if (toks->size() != static_cast<size_t>(seq.t()))
                throw std::runtime_error(*e.token_path + ": token count " +
                                         std::to_string(toks->size()) +
                                         " does not match frame count " +
                                         std::to_string(seq.t()));
            if (manifest.vocab != 0 && toks->vocab != manifest.vocab)
                throw std::runtime_error(*e.token_path + ": vocab " +
                                         std::to_string(toks->vocab) +
                                         " does not match manifest vocab " +
                                         std::to_string(manifest.vocab));
        }
        corpus.features.push_back(std::move(seq));
        corpus.tokens.push_back(std::move(toks));
    }
    return corpus;
}

Corpus load_corpus_file(const std::string& manifest_path) {
    return load_corpus(load_manifest(manifest_path));
}

}  // namespace stavq
