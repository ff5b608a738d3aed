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

#include "qbit/bittensor.hpp"
#include "qbit/quant.hpp"
#include "qbit/tensor.hpp"

namespace qbit::kernels {

// Integer results of a code GEMM before the final real scaling, row-major
// [rows x cols].
struct Accumulators {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int64_t> values;

  std::int64_t at(std::size_t r, std::size_t c) const {
    return values[r * cols + c];
  }
  friend bool operator==(const Accumulators&, const Accumulators&) = default;
};

// Plain real matrix product [m x n] * [n x p], accumulated in long double.
RealTensor gemm_reference(const RealTensor& a, const RealTensor& b);

// ---- integer-code GEMM --------------------------------------------------------

// Largest |accumulator| a dot product of length n can reach for the given
// operands; decides between 32- and 64-bit accumulation.
std::int64_t accumulator_bound(std::size_t n, const QuantizedTensor& w,
                               const QuantizedTensor& a);
bool needs_wide_accumulator(std::int64_t bound);

// w: symmetric-odd or binary codes [m x n]; a: unit or binary codes [n x p]
// with a single scale. Throws InvalidArgument on misuse of signedness.
Accumulators gemm_int_codes_accumulate(const QuantizedTensor& w,
                                       const QuantizedTensor& a);

// One real factor per output row: scale_w(row) * scale_a / (steps_w * steps_a),
// where steps is 2^k - 1 (1 for binary codes).
std::vector<double> row_factors(const QuantizedTensor& w,
                                const QuantizedTensor& a);
std::vector<double> row_factors(std::span<const double> w_scales,
                                std::size_t rows, double w_steps,
                                double a_scale, double a_steps);

RealTensor scale_rows(const Accumulators& acc, std::span<const double> factors);

RealTensor gemm_int_codes(const QuantizedTensor& w, const QuantizedTensor& a);

// ---- XNOR / popcount ------------------------------------------------------------

// One bit vector per row, each row starting on a word boundary. Bits past
// `bits` in a row's last word are unspecified.
struct BitMatrix {
  std::size_t rows = 0;
  std::size_t bits = 0;
  std::size_t words_per_row = 0;
  std::vector<std::uint64_t> words;

  BitMatrix() = default;
  BitMatrix(std::size_t rows, std::size_t bits);
  std::span<std::uint64_t> row(std::size_t r) {
    return {words.data() + r * words_per_row, words_per_row};
  }
  std::span<const std::uint64_t> row(std::size_t r) const {
    return {words.data() + r * words_per_row, words_per_row};
  }
  void set(std::size_t r, std::size_t i) {
    words[r * words_per_row + i / 64] |= std::uint64_t{1} << (i % 64);
  }
};

// Rows of a 2-D 1-bit packed tensor.
BitMatrix bit_rows(const PackedTensor& p);
// Columns of a 2-D 1-bit packed tensor, one bit vector per column.
BitMatrix bit_columns(const PackedTensor& p);

// sum over the first n bits of (+1 where bits agree, -1 where they differ)
// = 2 popcount(XNOR(a, b)) - n. Padding bits are masked.
std::int64_t xnor_dot(std::span<const std::uint64_t> a,
                      std::span<const std::uint64_t> b, std::size_t n);

// sum over the first n positions of w_l * p_l with w in {-1,+1} (bit 1 = +1)
// and p in {0, 1}.
std::int64_t signed_popcount(std::span<const std::uint64_t> w,
                             std::span<const std::uint64_t> plane,
                             std::size_t n);

// w: binary [m x n], a: binary [n x p], both packed with k = 1.
Accumulators gemm_xnor_accumulate(const PackedTensor& w, const PackedTensor& a);
RealTensor gemm_xnor(const PackedTensor& w, const PackedTensor& a);

// w: binary [m x n]; a: k_a bitplanes of unit codes [n x p].
Accumulators gemm_bitserial_accumulate(const PackedTensor& w,
                                       const BitplaneTensor& a);
RealTensor gemm_bitserial(const PackedTensor& w, const BitplaneTensor& a);

// ---- convolution ------------------------------------------------------------------

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// floor((in + 2 pad - kernel) / stride) + 1; throws InvalidArgument when the
// kernel does not fit or stride is zero.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t padding);

// Lowers image `n` of an NCHW tensor to columns [C*kh*kw x OH*OW].
// Padded positions are zero.
RealTensor im2col(const RealTensor& input, std::size_t n, std::size_t kh,
                  std::size_t kw, ConvGeometry g);
std::vector<std::int32_t> im2col_codes(const QuantizedTensor& input,
                                       std::size_t n, std::size_t kh,
                                       std::size_t kw, ConvGeometry g);

enum class GemmPath { IntCodes, Xnor, BitSerial };

// Kernel conv2d_quantized picks for the given operands.
GemmPath select_conv_path(const QuantizedTensor& input,
                          const QuantizedTensor& weights, ConvGeometry g);

struct ConvAccumulators {
  Shape shape;  // N x O x OH x OW
  std::vector<std::int64_t> values;
};

// input: NCHW unit or binary codes (single scale); weights: OIHW
// symmetric-odd or binary codes. Returns raw integer accumulators.
ConvAccumulators conv2d_accumulate(const QuantizedTensor& input,
                                   const QuantizedTensor& weights,
                                   ConvGeometry g);

// conv2d_accumulate scaled by the per-output-channel row factors.
RealTensor conv2d_quantized(const QuantizedTensor& input,
                            const QuantizedTensor& weights, ConvGeometry g);

// Real-valued convolution via im2col + gemm_reference. bias may be empty.
RealTensor conv2d_reference(const RealTensor& input, const RealTensor& weights,
                            std::span<const double> bias, ConvGeometry g);

}  // namespace qbit::kernels
