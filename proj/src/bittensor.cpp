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

#include "qbit/bittensor.hpp"

#include <string>

#include "qbit/error.hpp"

namespace qbit {
namespace {

std::uint32_t to_offset(const QuantizedTensor& q, std::size_t i) {
  const std::int32_t c = q.codes[i];
  switch (q.signedness) {
    case Signedness::Unit:
      return static_cast<std::uint32_t>(c);
    case Signedness::SymmetricOdd:
      if (c == 0) return 0;  // degenerate zero-scale channel
      return static_cast<std::uint32_t>((c + levels(q.bits)) / 2);
    case Signedness::Binary:
      return c > 0 ? 1u : 0u;
  }
  return 0;
}

std::int32_t from_offset(const PackedTensor& p, std::uint32_t c,
                         double scale) {
  switch (p.signedness) {
    case Signedness::Unit:
      return static_cast<std::int32_t>(c);
    case Signedness::SymmetricOdd:
      if (scale == 0.0) return 0;
      return static_cast<std::int32_t>(2 * static_cast<std::int64_t>(c) -
                                       levels(p.bits));
    case Signedness::Binary:
      return c ? 1 : -1;
  }
  return 0;
}

double scale_for(const std::vector<double>& scales, std::size_t element,
                 std::size_t count) {
  if (scales.empty()) return 1.0;
  if (scales.size() == 1) return scales[0];
  return scales[element / (count / scales.size())];
}

}  // namespace

std::size_t packed_bytes(std::size_t elements, int bits) {
  return (elements * static_cast<std::size_t>(bits) + 7) / 8;
}

std::uint32_t PackedTensor::offset_code(std::size_t element) const {
  const std::size_t bit = element * static_cast<std::size_t>(bits);
  // Codes are at most 8 bits, so two bytes always cover one element.
  std::uint32_t window = payload[bit / 8];
  if (bit / 8 + 1 < payload.size()) {
    window |= static_cast<std::uint32_t>(payload[bit / 8 + 1]) << 8;
  }
  return (window >> (bit % 8)) & ((1u << bits) - 1u);
}

PackedTensor pack(const QuantizedTensor& q) {
  q.validate();
  PackedTensor p;
  p.shape = q.shape;
  p.bits = q.bits;
  p.signedness = q.signedness;
  p.scales = q.scales;
  p.payload.assign(packed_bytes(q.size(), q.bits), 0);
  const std::size_t k = static_cast<std::size_t>(q.bits);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const std::uint32_t c = to_offset(q, i);
    if (c >> q.bits) {
      throw CorruptionError("pack: code at element " + std::to_string(i) +
                            " exceeds " + std::to_string(q.bits) + " bits");
    }
    const std::size_t bit = i * k;
    const std::uint32_t shifted = c << (bit % 8);
    p.payload[bit / 8] |= static_cast<std::uint8_t>(shifted & 0xFFu);
    if (shifted >> 8) {
      p.payload[bit / 8 + 1] |= static_cast<std::uint8_t>(shifted >> 8);
    }
  }
  return p;
}

QuantizedTensor unpack(const PackedTensor& p) {
  if (p.bits < 1 || p.bits > 8) {
    throw FormatError("unpack: bitwidth " + std::to_string(p.bits) +
                      " outside 1..8");
  }
  const std::size_t n = p.element_count();
  const std::size_t need = packed_bytes(n, p.bits);
  if (p.payload.size() < need) {
    throw FormatError("unpack: payload has " +
                      std::to_string(p.payload.size()) + " bytes, need " +
                      std::to_string(need));
  }
  QuantizedTensor q;
  q.shape = p.shape;
  q.bits = p.bits;
  q.signedness = p.signedness;
  q.scales = p.scales;
  q.codes.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    q.codes[i] = from_offset(p, p.offset_code(i), scale_for(p.scales, i, n));
  }
  return q;
}

BitplaneTensor to_bitplanes(const QuantizedTensor& q) {
  if (q.signedness != Signedness::Unit) {
    throw InvalidArgument(
        "to_bitplanes: signed codes unsupported; convert to offset form");
  }
  q.validate();
  BitplaneTensor b;
  b.shape = q.shape;
  b.bits = q.bits;
  b.scales = q.scales;
  const std::size_t words = (q.size() + 63) / 64;
  b.planes.assign(static_cast<std::size_t>(q.bits),
                  std::vector<std::uint64_t>(words, 0));
  for (std::size_t i = 0; i < q.size(); ++i) {
    const auto c = static_cast<std::uint32_t>(q.codes[i]);
    for (int t = 0; t < q.bits; ++t) {
      if ((c >> t) & 1u) b.planes[t][i / 64] |= std::uint64_t{1} << (i % 64);
    }
  }
  return b;
}

QuantizedTensor from_bitplanes(const BitplaneTensor& b) {
  if (b.planes.size() != static_cast<std::size_t>(b.bits)) {
    throw InvalidArgument("from_bitplanes: plane count " +
                          std::to_string(b.planes.size()) + " != k = " +
                          std::to_string(b.bits));
  }
  QuantizedTensor q;
  q.shape = b.shape;
  q.bits = b.bits;
  q.signedness = Signedness::Unit;
  q.scales = b.scales;
  q.codes.assign(b.element_count(), 0);
  for (std::size_t i = 0; i < q.codes.size(); ++i) {
    std::int32_t c = 0;
    for (int t = 0; t < b.bits; ++t) {
      if (b.bit(static_cast<std::size_t>(t), i)) c |= 1 << t;
    }
    q.codes[i] = c;
  }
  return q;
}

}  // namespace qbit
