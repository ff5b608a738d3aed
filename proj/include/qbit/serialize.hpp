// Copyright 2026 The qbit Authors. All Rights Reserved.
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
#include <filesystem>
#include <span>
#include <vector>

#include "qbit/dataset.hpp"
#include "qbit/deploy.hpp"
#include "qbit/network.hpp"

namespace qbit {

inline constexpr std::uint32_t kModelVersion = 1;

// "QBM1" packed model: header, topology block, then one record per weight op
// in graph order {k_w, k_a, signedness, shape, scales, mult, add, payload}.
// All integers little-endian, doubles as IEEE-754 bit patterns.
std::vector<std::uint8_t> encode_model(const PackedModel& m);
// Throws FormatError (with the byte offset in the message) on any malformed
// or truncated input.
PackedModel decode_model(std::span<const std::uint8_t> bytes);
void save_model(const PackedModel& m, const std::filesystem::path& path);
PackedModel load_model(const std::filesystem::path& path);

// "QBC1" training checkpoint: network description plus master weights and
// batch-norm statistics.
struct Checkpoint {
  NetworkDef def;
  Normalization normalization;
  std::vector<Tensor> state;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Reads the 4-byte magic of a file ("QBM1", "QBC1", ...); empty if shorter.
std::string file_magic(const std::filesystem::path& path);

}  // namespace qbit
