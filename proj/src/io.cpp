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

#include "stavq/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace stavq {

namespace {

constexpr uint32_t kFormatVersion = 1;

// Byte-level little-endian packing, independent of host endianness.
void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                          static_cast<unsigned char>((v >> 8) & 0xFF),
                          static_cast<unsigned char>((v >> 16) & 0xFF),
                          static_cast<unsigned char>((v >> 24) & 0xFF)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }

struct Reader {
    std::ifstream in;
    std::string path;

    Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw std::runtime_error(path + ": cannot open");
    }

    uint32_t get_u32() {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        if (in.gcount() != 4) throw std::runtime_error(path + ": truncated");
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }

    float get_f32() { return std::bit_cast<float>(get_u32()); }

    void expect_magic(const char (&magic)[5]) {
        char got[4];
        in.read(got, 4);
        if (in.gcount() != 4 || got[0] != magic[0] || got[1] != magic[1] || got[2] != magic[2] ||
            got[3] != magic[3])
            throw std::runtime_error(path + ": bad magic (expected " + magic + ")");
    }

    void expect_version() {
        const uint32_t ver = get_u32();
        if (ver != kFormatVersion)
            throw std::runtime_error(path + ": unsupported version " + std::to_string(ver));
    }

    void expect_eof() {
        char c;
        in.read(&c, 1);
        if (!in.eof()) throw std::runtime_error(path + ": trailing bytes");
    }

    double get_finite_f32(const char* what) {
        const float v = get_f32();
        if (!std::isfinite(v))
            throw std::runtime_error(path + ": non-finite " + what + " value");
        return static_cast<double>(v);
    }
};

void write_mat_f32(std::ostream& out, const Mat& m) {
    for (double v : m.data) put_f32(out, static_cast<float>(v));
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    return out;
}

void finish_out(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace

void save_features(const FeatureSequence& seq, const std::string& path) {
    seq.check();
    auto out = open_out(path);
    out.write("STAF", 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<uint32_t>(seq.t()));
    put_u32(out, static_cast<uint32_t>(seq.dim()));
    write_mat_f32(out, seq.frames);
    finish_out(out, path);
}

FeatureSequence load_features(const std::string& path) {
    Reader r(path);
    r.expect_magic("STAF");
    r.expect_version();
    const uint32_t t = r.get_u32();
    const uint32_t d = r.get_u32();
    if (t < 1 || d < 1) throw std::runtime_error(path + ": dimensions must be >= 1");
    FeatureSequence seq{Mat(static_cast<int>(t), static_cast<int>(d))};
    for (double& v : seq.frames.data) v = r.get_finite_f32("feature");
    r.expect_eof();
    return seq;
}

void save_tokens(const TokenSequence& seq, const std::string& path) {
    seq.check();
    auto out = open_out(path);
    out.write("STAT", 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<uint32_t>(seq.tokens.size()));
    put_u32(out, seq.vocab);
    for (uint32_t tok : seq.tokens) put_u32(out, tok);
    finish_out(out, path);
}

TokenSequence load_tokens(const std::string& path) {
    Reader r(path);
    r.expect_magic("STAT");
    r.expect_version();
    const uint32_t t = r.get_u32();
    const uint32_t vocab = r.get_u32();
    if (vocab < 1) throw std::runtime_error(path + ": vocab must be >= 1");
    TokenSequence seq;
    seq.vocab = vocab;
    seq.tokens.reserve(t);
    for (uint32_t i = 0; i < t; ++i) {
        const uint32_t tok = r.get_u32();
        if (tok >= vocab)
            throw std::runtime_error(path + ": token " + std::to_string(tok) +
                                     " out of range for vocab " + std::to_string(vocab));
        seq.tokens.push_back(tok);
    }
    r.expect_eof();
    return seq;
}

void save_codebooks(const CodebookStack& stack, const std::string& path) {
    stack.check();
    auto out = open_out(path);
    out.write("STAC", 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<uint32_t>(stack.layers.size()));
    for (const auto& cb : stack.layers) {
        put_u32(out, static_cast<uint32_t>(cb.size()));
        put_u32(out, static_cast<uint32_t>(cb.dim()));
        write_mat_f32(out, cb.entries);
    }
    finish_out(out, path);
}

CodebookStack load_codebooks(const std::string& path) {
    Reader r(path);
    r.expect_magic("STAC");
    r.expect_version();
    const uint32_t num_layers = r.get_u32();
    if (num_layers < 1) throw std::runtime_error(path + ": num_layers must be >= 1");
    CodebookStack stack;
    stack.layers.reserve(num_layers);
    int dim = -1;
    for (uint32_t i = 0; i < num_layers; ++i) {
        const uint32_t k = r.get_u32();
        const uint32_t d = r.get_u32();
        if (k < 1 || d < 1) throw std::runtime_error(path + ": layer dimensions must be >= 1");
        if (dim < 0) dim = static_cast<int>(d);
        else if (dim != static_cast<int>(d))
            throw std::runtime_error(path + ": layer dimension mismatch (" + std::to_string(d) +
                                     " vs " + std::to_string(dim) + ")");
        Codebook cb{Mat(static_cast<int>(k), static_cast<int>(d))};
        for (double& v : cb.entries.data) v = r.get_finite_f32("codebook");
        stack.layers.push_back(std::move(cb));
    }
    r.expect_eof();
    return stack;
}

void save_params(const NamedTensors& tensors, const std::string& path) {
    auto out = open_out(path);
    out.write("STAP", 4);
    put_u32(out, kFormatVersion);
    put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, mat] : tensors) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<uint32_t>(mat.rows));
        put_u32(out, static_cast<uint32_t>(mat.cols));
        write_mat_f32(out, mat);
    }
    finish_out(out, path);
}

NamedTensors load_params(const std::string& path) {
    Reader r(path);
    r.expect_magic("STAP");
    r.expect_version();
    const uint32_t num = r.get_u32();
    NamedTensors tensors;
    tensors.reserve(num);
    for (uint32_t i = 0; i < num; ++i) {
        const uint32_t name_len = r.get_u32();
        if (name_len > 4096) throw std::runtime_error(path + ": unreasonable tensor name length");
        std::string name(name_len, '\0');
        r.in.read(name.data(), name_len);
        if (r.in.gcount() != static_cast<std::streamsize>(name_len))
            throw std::runtime_error(path + ": truncated");
        const uint32_t rows = r.get_u32();
        const uint32_t cols = r.get_u32();
        Mat m(static_cast<int>(rows), static_cast<int>(cols));
        for (double& v : m.data) v = r.get_finite_f32("parameter");
        tensors.emplace_back(std::move(name), std::move(m));
    }
    r.expect_eof();
    return tensors;
}

}  // namespace stavq
