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
#include <vector>

#include "qbit/tensor.hpp"

namespace qbit {

inline constexpr int kFullPrecisionBits = 32;

enum class Role : std::uint8_t { Weight = 0, Activation = 1 };

// How integer codes map to real values.
//   Unit:         c in 0..2^k-1,            value = scale * c / (2^k-1)
//   SymmetricOdd: s in -(2^k-1)..2^k-1 odd, value = scale * s / (2^k-1)
//   Binary:       s in {-1,+1},             value = scale * s
enum class Signedness : std::uint8_t { Unit = 0, SymmetricOdd = 1, Binary = 2 };

const char* to_string(Signedness s);

// Bitwidth and role for one tensor. Rounding is always half away from zero.
struct QuantSpec {
  int bits = kFullPrecisionBits;
  Role role = Role::Weight;

  QuantSpec() = default;
  // Throws InvalidArgument unless 1 <= bits <= 8 or bits == 32.
  QuantSpec(int bits, Role role);

  bool full_precision() const { return bits == kFullPrecisionBits; }
  // 1-bit activations are representable but outside the mixed-precision
  // configurations this engine targets.
  bool flagged() const { return role == Role::Activation && bits == 1; }

  friend bool operator==(const QuantSpec&, const QuantSpec&) = default;
};

bool valid_bitwidth(int bits);

// 2^k - 1, the number of quantization steps for k bits.
inline std::int64_t levels(int bits) {
  return (std::int64_t{1} << bits) - 1;
}

// Half-away-from-zero rounding to the nearest integer.
std::int64_t round_half_away(double x);

// Integer-coded tensor. `scales` holds one entry per channel along axis 0,
// or a single entry applying to every element.
struct QuantizedTensor {
  Shape shape;
  std::vector<std::int32_t> codes;
  std::vector<double> scales;
  int bits = 1;
  Signedness signedness = Signedness::Unit;

  std::size_t size() const { return codes.size(); }
  // Elements sharing one scale entry.
  std::size_t channel_stride() const;
  double scale_of(std::size_t element) const;
  // Value of one element without materializing the whole tensor.
  double value(std::size_t element) const;

  std::int32_t min_code() const;
  std::int32_t max_code() const;
  bool code_in_range(std::int32_t code) const;

  // Throws CorruptionError on any out-of-range code, InvalidArgument on
  // inconsistent shape/scales.
  void validate() const;

  RealTensor reconstruct() const;

  friend bool operator==(const QuantizedTensor&,
                         const QuantizedTensor&) = default;
};

// ---- binarization ---------------------------------------------------------

// sign(x) with sign(0) = +1 and one L1-mean scale alpha = sum|x_i| / n.
QuantizedTensor binarize(const RealTensor& x);

// binarize() applied independently to every slice along axis 0, giving one
// alpha per output channel.
QuantizedTensor binarize_channels(const RealTensor& w);

// upstream * 1{|x| < 1}. Alpha is treated as a constant.
RealTensor binarize_ste_grad(const RealTensor& x, const RealTensor& upstream);

// ---- linear k-bit quantizer on [0, 1] -------------------------------------

// codes = round((2^k - 1) x); throws RangeViolation outside [0, 1].
QuantizedTensor quantize_unit(const RealTensor& x, int bits);

// Straight-through: identity.
RealTensor quantize_unit_ste_grad(const RealTensor& upstream);

// ---- weights --------------------------------------------------------------

inline constexpr double kDegenerateChannelEpsilon = 1e-12;

// Per output channel (axis 0): w_hat = tanh(W), M = max |w_hat|,
// W_q = 2 Q(w_hat / (2M) + 1/2) - 1, stored as odd codes s = 2c - (2^k-1)
// with unit scale so that reconstruction is W_q in [-1, 1]. Channels with
// M < 1e-12 map to zero codes and emit a warning.
QuantizedTensor quantize_weights(const RealTensor& w, int bits);

// ---- activations ----------------------------------------------------------

// codes = round((2^k - 1) clamp(s, 0, 1)).
QuantizedTensor quantize_activations(const RealTensor& s, int bits);

// upstream * 1{0 <= s <= 1}.
RealTensor clamp_ste_grad(const RealTensor& s, const RealTensor& upstream);

}  // namespace qbit
