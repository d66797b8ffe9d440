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

#include <string>
#include <utility>
#include <vector>

#include "stavq/types.hpp"

namespace stavq {

// Binary file formats, all little-endian, 32-bit floats and unsigned ints:
//
//   feature file  "STAF" | u32 version=1 | u32 T | u32 D | T*D f32 row-major
//   token file    "STAT" | u32 version=1 | u32 T | u32 vocab | T u32 tokens
//   codebook file "STAC" | u32 version=1 | u32 num_layers |
//                 per layer: u32 K | u32 D | K*D f32 row-major
//   param file    "STAP" | u32 version=1 | u32 num_tensors |
//                 per tensor: u32 name_len | name bytes | u32 rows | u32 cols |
//                 rows*cols f32 row-major
//
// Loads reject bad magic, truncation, dimension mismatches, non-finite
// values, and out-of-range tokens.

void save_features(const FeatureSequence& seq, const std::string& path);
FeatureSequence load_features(const std::string& path);

void save_tokens(const TokenSequence& seq, const std::string& path);
TokenSequence load_tokens(const std::string& path);

void save_codebooks(const CodebookStack& stack, const std::string& path);
CodebookStack load_codebooks(const std::string& path);

using NamedTensors = std::vector<std::pair<std::string, Mat>>;

void save_params(const NamedTensors& tensors, const std::string& path);
NamedTensors load_params(const std::string& path);

}  // namespace stavq
