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
#include <span>
#include <vector>

#include "qbit/quant.hpp"

namespace qbit {

// Bit-packed codes. Element e occupies payload bits [e*k, e*k + k), counted
// from bit 0 of byte 0, least significant bit first. Signed codes are stored
// in offset form: symmetric-odd s as c = (s + 2^k - 1) / 2, binary s as
// (s + 1) / 2 so that bit 1 means +1.
struct PackedTensor {
  Shape shape;
  int bits = 1;
  Signedness signedness = Signedness::Unit;
  std::vector<double> scales;
  std::vector<std::uint8_t> payload;

  std::size_t element_count() const { return shape_size(shape); }
  // Offset-form code of one element.
  std::uint32_t offset_code(std::size_t element) const;

  friend bool operator==(const PackedTensor&, const PackedTensor&) = default;
};

// ceil(n * k / 8).
std::size_t packed_bytes(std::size_t elements, int bits);

// Throws CorruptionError if a code does not fit its declared range.
PackedTensor pack(const QuantizedTensor& q);

// Throws FormatError if the payload is shorter than the shape requires.
QuantizedTensor unpack(const PackedTensor& p);

// k one-bit planes of an unsigned code tensor; plane t holds bit t of each
// code, packed 64 elements per word in element order.
struct BitplaneTensor {
  Shape shape;
  int bits = 1;
  std::vector<double> scales;
  std::vector<std::vector<std::uint64_t>> planes;

  std::size_t element_count() const { return shape_size(shape); }
  bool bit(std::size_t plane, std::size_t element) const {
    return (planes[plane][element / 64] >> (element % 64)) & 1u;
  }
};

// Unit codes only; signed codes throw InvalidArgument.
BitplaneTensor to_bitplanes(const QuantizedTensor& q);

// sum_t 2^t plane_t, as unit codes.
QuantizedTensor from_bitplanes(const BitplaneTensor& b);

}  // namespace qbit
