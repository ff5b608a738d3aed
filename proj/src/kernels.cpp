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

#include "qbit/kernels.hpp"

#include <bit>
#include <limits>
#include <string>

#include "qbit/error.hpp"

namespace qbit::kernels {
namespace {

void require_matrix(const Shape& s, const char* what) {
  if (s.size() != 2) {
    throw InvalidArgument(std::string(what) + ": expected a matrix, got " +
                          shape_to_string(s));
  }
}

double steps_of(const QuantizedTensor& q) {
  return q.signedness == Signedness::Binary
             ? 1.0
             : static_cast<double>(levels(q.bits));
}

double single_scale(const std::vector<double>& scales, const char* what) {
  if (scales.size() > 1) {
    throw InvalidArgument(std::string(what) +
                          ": activation operand must carry a single scale");
  }
  return scales.empty() ? 1.0 : scales[0];
}

std::int64_t max_abs_code(const QuantizedTensor& q) {
  switch (q.signedness) {
    case Signedness::Binary:
      return 1;
    default:
      return levels(q.bits);
  }
}

void check_code_operands(const QuantizedTensor& w, const QuantizedTensor& a,
                         const char* what) {
  if (w.signedness == Signedness::Unit) {
    throw InvalidArgument(std::string(what) +
                          ": weights must be symmetric-odd or binary codes");
  }
  if (a.signedness == Signedness::SymmetricOdd) {
    throw InvalidArgument(std::string(what) +
                          ": activations must be unit or binary codes");
  }
}

template <typename Acc>
void accumulate_codes(const std::int32_t* w, std::size_t m, std::size_t n,
                      const std::int32_t* a, std::size_t p,
                      std::int64_t* out) {
  std::vector<Acc> row(p);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), Acc{0});
    const std::int32_t* wr = w + i * n;
    for (std::size_t l = 0; l < n; ++l) {
      const Acc wv = static_cast<Acc>(wr[l]);
      if (wv == 0) continue;
      const std::int32_t* ar = a + l * p;
      for (std::size_t j = 0; j < p; ++j) row[j] += wv * static_cast<Acc>(ar[j]);
    }
    for (std::size_t j = 0; j < p; ++j) out[i * p + j] = row[j];
  }
}

void accumulate_any(const std::int32_t* w, std::size_t m, std::size_t n,
                    const std::int32_t* a, std::size_t p, std::int64_t bound,
                    std::int64_t* out) {
  if (needs_wide_accumulator(bound)) {
    accumulate_codes<std::int64_t>(w, m, n, a, p, out);
  } else {
    accumulate_codes<std::int32_t>(w, m, n, a, p, out);
  }
}

std::uint64_t tail_mask(std::size_t n) {
  const std::size_t rem = n % 64;
  return rem == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << rem) - 1;
}

void require_one_bit(const PackedTensor& p, const char* what) {
  if (p.bits != 1) {
    throw InvalidArgument(std::string(what) + ": expected 1-bit operand, got k=" +
                          std::to_string(p.bits));
  }
  if (p.payload.size() < packed_bytes(p.element_count(), 1)) {
    throw FormatError(std::string(what) + ": truncated payload");
  }
}

bool payload_bit(const PackedTensor& p, std::size_t e) {
  return (p.payload[e / 8] >> (e % 8)) & 1u;
}

void require_conv_operands(const Shape& in, const Shape& w, const char* what) {
  if (in.size() != 4 || w.size() != 4) {
    throw InvalidArgument(std::string(what) +
                          ": expected NCHW input and OIHW weights, got " +
                          shape_to_string(in) + " and " + shape_to_string(w));
  }
  if (in[1] != w[1]) {
    throw InvalidArgument(std::string(what) + ": input has " +
                          std::to_string(in[1]) + " channels, weights expect " +
                          std::to_string(w[1]));
  }
}

template <typename T, typename Get>
void lower(std::size_t channels, std::size_t height, std::size_t width,
           std::size_t kh, std::size_t kw, ConvGeometry g, std::size_t oh,
           std::size_t ow, Get&& get, T* cols) {
  const std::size_t spatial = oh * ow;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t dy = 0; dy < kh; ++dy) {
      for (std::size_t dx = 0; dx < kw; ++dx) {
        T* dst = cols + ((c * kh + dy) * kw + dx) * spatial;
        for (std::size_t y = 0; y < oh; ++y) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + dy) -
                                    static_cast<std::ptrdiff_t>(g.padding);
          for (std::size_t x = 0; x < ow; ++x) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(x * g.stride + dx) -
                static_cast<std::ptrdiff_t>(g.padding);
            T v{0};
            if (iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(height) &&
                ix < static_cast<std::ptrdiff_t>(width)) {
              v = get((c * height + static_cast<std::size_t>(iy)) * width +
                      static_cast<std::size_t>(ix));
            }
            dst[y * ow + x] = v;
          }
        }
      }
    }
  }
}

}  // namespace

// ---- reference ------------------------------------------------------------------

RealTensor gemm_reference(const RealTensor& a, const RealTensor& b) {
  require_matrix(a.shape(), "gemm_reference");
  require_matrix(b.shape(), "gemm_reference");
  const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
  if (b.dim(0) != n) {
    throw InvalidArgument("gemm_reference: inner dimensions " +
                          std::to_string(n) + " and " +
                          std::to_string(b.dim(0)) + " differ");
  }
  RealTensor c({m, p});
  std::vector<long double> row(p);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(row.begin(), row.end(), 0.0L);
    for (std::size_t l = 0; l < n; ++l) {
      const long double av = a[i * n + l];
      const double* br = b.data() + l * p;
      for (std::size_t j = 0; j < p; ++j) row[j] += av * br[j];
    }
    for (std::size_t j = 0; j < p; ++j) c[i * p + j] = static_cast<double>(row[j]);
  }
  return c;
}

// ---- integer codes -----------------------------------------------------------------

std::int64_t accumulator_bound(std::size_t n, const QuantizedTensor& w,
                               const QuantizedTensor& a) {
  return static_cast<std::int64_t>(n) * max_abs_code(w) * max_abs_code(a);
}

bool needs_wide_accumulator(std::int64_t bound) {
  return bound > std::numeric_limits<std::int32_t>::max();
}

Accumulators gemm_int_codes_accumulate(const QuantizedTensor& w,
                                       const QuantizedTensor& a) {
  require_matrix(w.shape, "gemm_int_codes");
  require_matrix(a.shape, "gemm_int_codes");
  check_code_operands(w, a, "gemm_int_codes");
  const std::size_t m = w.shape[0], n = w.shape[1], p = a.shape[1];
  if (a.shape[0] != n) {
    throw InvalidArgument("gemm_int_codes: inner dimensions " +
                          std::to_string(n) + " and " +
                          std::to_string(a.shape[0]) + " differ");
  }
  Accumulators acc{m, p, std::vector<std::int64_t>(m * p)};
  accumulate_any(w.codes.data(), m, n, a.codes.data(), p,
                 accumulator_bound(n, w, a), acc.values.data());
  return acc;
}

std::vector<double> row_factors(std::span<const double> w_scales,
                                std::size_t rows, double w_steps,
                                double a_scale, double a_steps) {
  std::vector<double> f(rows);
  const double denom = w_steps * a_steps;
  for (std::size_t i = 0; i < rows; ++i) {
    const double sw =
        w_scales.empty() ? 1.0 : (w_scales.size() == 1 ? w_scales[0] : w_scales[i]);
    f[i] = sw * a_scale / denom;
  }
  return f;
}

std::vector<double> row_factors(const QuantizedTensor& w,
                                const QuantizedTensor& a) {
  if (w.shape.empty()) throw InvalidArgument("row_factors: empty weights");
  return row_factors(w.scales, w.shape[0], steps_of(w),
                     single_scale(a.scales, "row_factors"), steps_of(a));
}

RealTensor scale_rows(const Accumulators& acc, std::span<const double> factors) {
  if (factors.size() != acc.rows) {
    throw InvalidArgument("scale_rows: factor count does not match rows");
  }
  RealTensor out({acc.rows, acc.cols});
  for (std::size_t i = 0; i < acc.rows; ++i) {
    for (std::size_t j = 0; j < acc.cols; ++j) {
      out[i * acc.cols + j] = static_cast<double>(acc.at(i, j)) * factors[i];
    }
  }
  return out;
}

RealTensor gemm_int_codes(const QuantizedTensor& w, const QuantizedTensor& a) {
  const Accumulators acc = gemm_int_codes_accumulate(w, a);
  return scale_rows(acc, row_factors(w, a));
}

// ---- bit matrices ----------------------------------------------------------------------

BitMatrix::BitMatrix(std::size_t rows_, std::size_t bits_)
    : rows(rows_),
      bits(bits_),
      words_per_row((bits_ + 63) / 64),
      words(rows_ * ((bits_ + 63) / 64), 0) {}

BitMatrix bit_rows(const PackedTensor& p) {
  require_matrix(p.shape, "bit_rows");
  require_one_bit(p, "bit_rows");
  const std::size_t m = p.shape[0], n = p.shape[1];
  BitMatrix bm(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t l = 0; l < n; ++l) {
      if (payload_bit(p, i * n + l)) bm.set(i, l);
    }
  }
  return bm;
}

BitMatrix bit_columns(const PackedTensor& p) {
  require_matrix(p.shape, "bit_columns");
  require_one_bit(p, "bit_columns");
  const std::size_t n = p.shape[0], cols = p.shape[1];
  BitMatrix bm(cols, n);
  for (std::size_t l = 0; l < n; ++l) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (payload_bit(p, l * cols + j)) bm.set(j, l);
    }
  }
  return bm;
}

std::int64_t xnor_dot(std::span<const std::uint64_t> a,
                      std::span<const std::uint64_t> b, std::size_t n) {
  const std::size_t words = (n + 63) / 64;
  if (a.size() < words || b.size() < words) {
    throw InvalidArgument("xnor_dot: bit vectors shorter than n");
  }
  if (words == 0) return 0;
  std::int64_t agree = 0;
  for (std::size_t w = 0; w + 1 < words; ++w) {
    agree += std::popcount(~(a[w] ^ b[w]));
  }
  agree += std::popcount(~(a[words - 1] ^ b[words - 1]) & tail_mask(n));
  return 2 * agree - static_cast<std::int64_t>(n);
}

std::int64_t signed_popcount(std::span<const std::uint64_t> w,
                             std::span<const std::uint64_t> plane,
                             std::size_t n) {
  const std::size_t words = (n + 63) / 64;
  if (w.size() < words || plane.size() < words) {
    throw InvalidArgument("signed_popcount: bit vectors shorter than n");
  }
  std::int64_t pos = 0, total = 0;
  for (std::size_t i = 0; i < words; ++i) {
    const std::uint64_t pm = i + 1 == words ? plane[i] & tail_mask(n) : plane[i];
    pos += std::popcount(w[i] & pm);
    total += std::popcount(pm);
  }
  return 2 * pos - total;
}

Accumulators gemm_xnor_accumulate(const PackedTensor& w, const PackedTensor& a) {
  require_matrix(w.shape, "gemm_xnor");
  require_matrix(a.shape, "gemm_xnor");
  require_one_bit(w, "gemm_xnor");
  require_one_bit(a, "gemm_xnor");
  if (w.shape[1] != a.shape[0]) {
    throw InvalidArgument("gemm_xnor: inner lengths " +
                          std::to_string(w.shape[1]) + " and " +
                          std::to_string(a.shape[0]) + " differ");
  }
  const std::size_t n = w.shape[1];
  const BitMatrix wr = bit_rows(w);
  const BitMatrix ac = bit_columns(a);
  Accumulators acc{wr.rows, ac.rows, std::vector<std::int64_t>(wr.rows * ac.rows)};
  for (std::size_t i = 0; i < wr.rows; ++i) {
    for (std::size_t j = 0; j < ac.rows; ++j) {
      acc.values[i * ac.rows + j] = xnor_dot(wr.row(i), ac.row(j), n);
    }
  }
  return acc;
}

RealTensor gemm_xnor(const PackedTensor& w, const PackedTensor& a) {
  if (w.signedness != Signedness::Binary || a.signedness != Signedness::Binary) {
    throw InvalidArgument("gemm_xnor: both operands must be binary codes");
  }
  const Accumulators acc = gemm_xnor_accumulate(w, a);
  return scale_rows(acc, row_factors(w.scales, acc.rows, 1.0,
                                     single_scale(a.scales, "gemm_xnor"), 1.0));
}

Accumulators gemm_bitserial_accumulate(const PackedTensor& w,
                                       const BitplaneTensor& a) {
  require_matrix(w.shape, "gemm_bitserial");
  require_matrix(a.shape, "gemm_bitserial");
  require_one_bit(w, "gemm_bitserial");
  if (a.planes.size() != static_cast<std::size_t>(a.bits)) {
    throw InvalidArgument("gemm_bitserial: " + std::to_string(a.planes.size()) +
                          " planes for k_a = " + std::to_string(a.bits));
  }
  if (w.shape[1] != a.shape[0]) {
    throw InvalidArgument("gemm_bitserial: inner lengths " +
                          std::to_string(w.shape[1]) + " and " +
                          std::to_string(a.shape[0]) + " differ");
  }
  const std::size_t m = w.shape[0], n = w.shape[1], p = a.shape[1];
  const BitMatrix wr = bit_rows(w);
  Accumulators acc{m, p, std::vector<std::int64_t>(m * p, 0)};
  for (int t = 0; t < a.bits; ++t) {
    BitMatrix cols(p, n);
    for (std::size_t l = 0; l < n; ++l) {
      for (std::size_t j = 0; j < p; ++j) {
        if (a.bit(static_cast<std::size_t>(t), l * p + j)) cols.set(j, l);
      }
    }
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < p; ++j) {
        acc.values[i * p + j] +=
            signed_popcount(wr.row(i), cols.row(j), n) * (std::int64_t{1} << t);
      }
    }
  }
  return acc;
}

RealTensor gemm_bitserial(const PackedTensor& w, const BitplaneTensor& a) {
  if (w.signedness != Signedness::Binary) {
    throw InvalidArgument("gemm_bitserial: weights must be binary codes");
  }
  const Accumulators acc = gemm_bitserial_accumulate(w, a);
  return scale_rows(acc,
                    row_factors(w.scales, acc.rows, 1.0,
                                single_scale(a.scales, "gemm_bitserial"),
                                static_cast<double>(levels(a.bits))));
}

// ---- convolution ------------------------------------------------------------------

std::size_t conv_output_extent(std::size_t in, std::size_t kernel,
                               std::size_t stride, std::size_t padding) {
  if (stride == 0) throw InvalidArgument("conv: stride must be positive");
  if (kernel == 0 || in + 2 * padding < kernel) {
    throw InvalidArgument("conv: kernel " + std::to_string(kernel) +
                          " does not fit input " + std::to_string(in) +
                          " with padding " + std::to_string(padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

RealTensor im2col(const RealTensor& input, std::size_t n, std::size_t kh,
                  std::size_t kw, ConvGeometry g) {
  if (input.rank() != 4 || n >= input.dim(0)) {
    throw InvalidArgument("im2col: expected NCHW input and a valid image index");
  }
  const std::size_t c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::size_t oh = conv_output_extent(h, kh, g.stride, g.padding);
  const std::size_t ow = conv_output_extent(w, kw, g.stride, g.padding);
  RealTensor cols({c * kh * kw, oh * ow});
  const double* base = input.data() + n * c * h * w;
  lower<double>(c, h, w, kh, kw, g, oh, ow,
                [base](std::size_t i) { return base[i]; }, cols.data());
  return cols;
}

std::vector<std::int32_t> im2col_codes(const QuantizedTensor& input,
                                       std::size_t n, std::size_t kh,
                                       std::size_t kw, ConvGeometry g) {
  if (input.shape.size() != 4 || n >= input.shape[0]) {
    throw InvalidArgument(
        "im2col_codes: expected NCHW input and a valid image index");
  }
  const std::size_t c = input.shape[1], h = input.shape[2], w = input.shape[3];
  const std::size_t oh = conv_output_extent(h, kh, g.stride, g.padding);
  const std::size_t ow = conv_output_extent(w, kw, g.stride, g.padding);
  std::vector<std::int32_t> cols(c * kh * kw * oh * ow);
  const std::int32_t* base = input.codes.data() + n * c * h * w;
  lower<std::int32_t>(c, h, w, kh, kw, g, oh, ow,
                      [base](std::size_t i) { return base[i]; }, cols.data());
  return cols;
}

GemmPath select_conv_path(const QuantizedTensor& input,
                          const QuantizedTensor& weights, ConvGeometry g) {
  if (weights.signedness == Signedness::Binary) {
    if (input.signedness == Signedness::Binary && g.padding == 0) {
      return GemmPath::Xnor;
    }
    if (input.signedness == Signedness::Unit) return GemmPath::BitSerial;
  }
  return GemmPath::IntCodes;
}

ConvAccumulators conv2d_accumulate(const QuantizedTensor& input,
                                   const QuantizedTensor& weights,
                                   ConvGeometry g) {
  require_conv_operands(input.shape, weights.shape, "conv2d_quantized");
  check_code_operands(weights, input, "conv2d_quantized");
  const std::size_t batch = input.shape[0];
  const std::size_t out_c = weights.shape[0];
  const std::size_t kh = weights.shape[2], kw = weights.shape[3];
  const std::size_t oh =
      conv_output_extent(input.shape[2], kh, g.stride, g.padding);
  const std::size_t ow =
      conv_output_extent(input.shape[3], kw, g.stride, g.padding);
  const std::size_t k = input.shape[1] * kh * kw;
  const std::size_t spatial = oh * ow;

  ConvAccumulators out{{batch, out_c, oh, ow},
                       std::vector<std::int64_t>(batch * out_c * spatial)};
  const GemmPath path = select_conv_path(input, weights, g);

  QuantizedTensor wmat = weights;
  wmat.shape = {out_c, k};
  PackedTensor wpacked;
  if (path != GemmPath::IntCodes) wpacked = pack(wmat);
  const std::int64_t bound = accumulator_bound(k, weights, input);

  for (std::size_t n = 0; n < batch; ++n) {
    std::vector<std::int32_t> cols = im2col_codes(input, n, kh, kw, g);
    std::int64_t* dst = out.values.data() + n * out_c * spatial;
    if (path == GemmPath::IntCodes) {
      accumulate_any(wmat.codes.data(), out_c, k, cols.data(), spatial, bound,
                     dst);
      continue;
    }
    QuantizedTensor colq;
    colq.shape = {k, spatial};
    colq.codes = std::move(cols);
    colq.scales = {1.0};
    colq.bits = input.bits;
    colq.signedness = input.signedness;
    const Accumulators acc = path == GemmPath::Xnor
                                 ? gemm_xnor_accumulate(wpacked, pack(colq))
                                 : gemm_bitserial_accumulate(
                                       wpacked, to_bitplanes(colq));
    std::copy(acc.values.begin(), acc.values.end(), dst);
  }
  return out;
}

RealTensor conv2d_quantized(const QuantizedTensor& input,
                            const QuantizedTensor& weights, ConvGeometry g) {
  const ConvAccumulators acc = conv2d_accumulate(input, weights, g);
  const std::vector<double> f = row_factors(
      weights.scales, weights.shape[0], steps_of(weights),
      single_scale(input.scales, "conv2d_quantized"), steps_of(input));
  RealTensor out(acc.shape);
  const std::size_t out_c = acc.shape[1];
  const std::size_t spatial = acc.shape[2] * acc.shape[3];
  for (std::size_t i = 0; i < acc.values.size(); ++i) {
    out[i] = static_cast<double>(acc.values[i]) * f[(i / spatial) % out_c];
  }
  return out;
}

RealTensor conv2d_reference(const RealTensor& input, const RealTensor& weights,
                            std::span<const double> bias, ConvGeometry g) {
  require_conv_operands(input.shape(), weights.shape(), "conv2d_reference");
  const std::size_t batch = input.dim(0);
  const std::size_t out_c = weights.dim(0);
  const std::size_t kh = weights.dim(2), kw = weights.dim(3);
  const std::size_t oh = conv_output_extent(input.dim(2), kh, g.stride, g.padding);
  const std::size_t ow = conv_output_extent(input.dim(3), kw, g.stride, g.padding);
  const std::size_t spatial = oh * ow;
  if (!bias.empty() && bias.size() != out_c) {
    throw InvalidArgument("conv2d_reference: bias size does not match filters");
  }
  const RealTensor wmat = weights.reshaped({out_c, weights.size() / out_c});
  RealTensor out({batch, out_c, oh, ow});
  for (std::size_t n = 0; n < batch; ++n) {
    const RealTensor y = gemm_reference(wmat, im2col(input, n, kh, kw, g));
    double* dst = out.data() + n * out_c * spatial;
    for (std::size_t o = 0; o < out_c; ++o) {
      const double b = bias.empty() ? 0.0 : bias[o];
      for (std::size_t s = 0; s < spatial; ++s) {
        dst[o * spatial + s] = y[o * spatial + s] + b;
      }
    }
  }
  return out;
}

}  // namespace qbit::kernels
