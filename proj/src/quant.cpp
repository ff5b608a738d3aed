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

#include "qbit/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qbit/error.hpp"

namespace qbit {

const char* to_string(Signedness s) {
  switch (s) {
    case Signedness::Unit:
      return "unit";
    case Signedness::SymmetricOdd:
      return "symmetric-odd";
    case Signedness::Binary:
      return "binary";
  }
  return "?";
}

bool valid_bitwidth(int bits) {
  return (bits >= 1 && bits <= 8) || bits == kFullPrecisionBits;
}

QuantSpec::QuantSpec(int bits_, Role role_) : bits(bits_), role(role_) {
  if (!valid_bitwidth(bits)) {
    throw InvalidArgument("bitwidth must be in 1..8 or 32, got " +
                          std::to_string(bits));
  }
}

std::int64_t round_half_away(double x) { return std::llround(x); }

namespace {

void require_code_bits(int bits, const char* what) {
  if (bits < 1 || bits > 8) {
    throw InvalidArgument(std::string(what) +
                          ": bitwidth must be in 1..8, got " +
                          std::to_string(bits));
  }
}

void require_finite(const RealTensor& x, const char* what) {
  if (!x.all_finite()) {
    throw InvalidArgument(std::string(what) + ": non-finite input");
  }
}

}  // namespace

// ---- QuantizedTensor -------------------------------------------------------

std::size_t QuantizedTensor::channel_stride() const {
  if (scales.size() <= 1) return codes.size();
  return codes.size() / scales.size();
}

double QuantizedTensor::scale_of(std::size_t element) const {
  if (scales.empty()) return 1.0;
  if (scales.size() == 1) return scales[0];
  return scales[element / channel_stride()];
}

double QuantizedTensor::value(std::size_t element) const {
  const double code = codes[element];
  const double scale = scale_of(element);
  if (signedness == Signedness::Binary) return scale * code;
  return scale * code / static_cast<double>(levels(bits));
}

std::int32_t QuantizedTensor::min_code() const {
  switch (signedness) {
    case Signedness::Unit:
      return 0;
    case Signedness::SymmetricOdd:
      return -static_cast<std::int32_t>(levels(bits));
    case Signedness::Binary:
      return -1;
  }
  return 0;
}

std::int32_t QuantizedTensor::max_code() const {
  switch (signedness) {
    case Signedness::Unit:
    case Signedness::SymmetricOdd:
      return static_cast<std::int32_t>(levels(bits));
    case Signedness::Binary:
      return 1;
  }
  return 0;
}

bool QuantizedTensor::code_in_range(std::int32_t code) const {
  if (code < min_code() || code > max_code()) return false;
  switch (signedness) {
    case Signedness::Unit:
      return true;
    case Signedness::SymmetricOdd:
      return (code & 1) != 0;
    case Signedness::Binary:
      return code == 1 || code == -1;
  }
  return false;
}

void QuantizedTensor::validate() const {
  if (bits < 1 || bits > 8) {
    throw InvalidArgument("quantized tensor: bitwidth " +
                          std::to_string(bits) + " outside 1..8");
  }
  if (signedness == Signedness::Binary && bits != 1) {
    throw InvalidArgument("quantized tensor: binary codes require k = 1");
  }
  if (codes.size() != shape_size(shape)) {
    throw InvalidArgument("quantized tensor: code count does not match shape " +
                          shape_to_string(shape));
  }
  if (scales.size() > 1) {
    if (shape.empty() || shape[0] != scales.size()) {
      throw InvalidArgument(
          "quantized tensor: per-channel scales must match axis 0");
    }
  }
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const std::int32_t c = codes[i];
    // A zero-scale channel of signed codes is the degenerate-channel
    // encoding: all codes are zero.
    if (signedness == Signedness::SymmetricOdd && scale_of(i) == 0.0) {
      if (c != 0) {
        throw CorruptionError("nonzero code at element " + std::to_string(i) +
                              " in a zero-scale channel");
      }
      continue;
    }
    if (!code_in_range(c)) {
      throw CorruptionError("code " + std::to_string(c) + " at element " +
                            std::to_string(i) + " out of range for " +
                            to_string(signedness) + " k=" +
                            std::to_string(bits));
    }
  }
}

RealTensor QuantizedTensor::reconstruct() const {
  RealTensor out(shape);
  for (std::size_t i = 0; i < codes.size(); ++i) out[i] = value(i);
  return out;
}

// ---- binarization -----------------------------------------------------------

QuantizedTensor binarize(const RealTensor& x) {
  if (x.empty()) throw InvalidArgument("binarize: empty tensor");
  require_finite(x, "binarize");
  double l1 = 0.0;
  QuantizedTensor q;
  q.shape = x.shape();
  q.bits = 1;
  q.signedness = Signedness::Binary;
  q.codes.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    l1 += std::abs(x[i]);
    q.codes[i] = x[i] >= 0.0 ? 1 : -1;
  }
  q.scales = {l1 / static_cast<double>(x.size())};
  return q;
}

QuantizedTensor binarize_channels(const RealTensor& w) {
  if (w.empty() || w.rank() == 0) {
    throw InvalidArgument("binarize_channels: empty tensor");
  }
  require_finite(w, "binarize_channels");
  const std::size_t channels = w.dim(0);
  const std::size_t fan_in = w.size() / channels;
  QuantizedTensor q;
  q.shape = w.shape();
  q.bits = 1;
  q.signedness = Signedness::Binary;
  q.codes.resize(w.size());
  q.scales.assign(channels, 0.0);
  for (std::size_t o = 0; o < channels; ++o) {
    double l1 = 0.0;
    for (std::size_t j = 0; j < fan_in; ++j) {
      const double v = w[o * fan_in + j];
      l1 += std::abs(v);
      q.codes[o * fan_in + j] = v >= 0.0 ? 1 : -1;
    }
    q.scales[o] = l1 / static_cast<double>(fan_in);
  }
  return q;
}

RealTensor binarize_ste_grad(const RealTensor& x, const RealTensor& upstream) {
  require_same_shape(x, upstream, "binarize_ste_grad");
  RealTensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    g[i] = std::abs(x[i]) < 1.0 ? upstream[i] : 0.0;
  }
  return g;
}

// ---- linear quantizer -------------------------------------------------------

QuantizedTensor quantize_unit(const RealTensor& x, int bits) {
  require_code_bits(bits, "quantize_unit");
  const double n = static_cast<double>(levels(bits));
  QuantizedTensor q;
  q.shape = x.shape();
  q.bits = bits;
  q.signedness = Signedness::Unit;
  q.scales = {1.0};
  q.codes.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i];
    if (!(v >= 0.0 && v <= 1.0)) {
      throw RangeViolation("quantize_unit: element " + std::to_string(i) +
                           " = " + std::to_string(v) + " outside [0, 1]");
    }
    q.codes[i] = static_cast<std::int32_t>(round_half_away(n * v));
  }
  return q;
}

RealTensor quantize_unit_ste_grad(const RealTensor& upstream) {
  return upstream;
}

// ---- weights ----------------------------------------------------------------

QuantizedTensor quantize_weights(const RealTensor& w, int bits) {
  require_code_bits(bits, "quantize_weights");
  if (w.empty() || w.rank() == 0 || w.dim(0) == 0) {
    throw InvalidArgument("quantize_weights: need at least one channel");
  }
  require_finite(w, "quantize_weights");
  const std::size_t channels = w.dim(0);
  const std::size_t fan_in = w.size() / channels;
  const std::int64_t n = levels(bits);

  QuantizedTensor q;
  q.shape = w.shape();
  q.bits = bits;
  q.signedness = Signedness::SymmetricOdd;
  q.codes.assign(w.size(), 0);
  q.scales.assign(channels, 1.0);

  std::vector<double> hat(fan_in);
  for (std::size_t o = 0; o < channels; ++o) {
    double m = 0.0;
    for (std::size_t j = 0; j < fan_in; ++j) {
      hat[j] = std::tanh(w[o * fan_in + j]);
      m = std::max(m, std::abs(hat[j]));
    }
    if (m < kDegenerateChannelEpsilon) {
      q.scales[o] = 0.0;
      warn("quantize_weights: channel " + std::to_string(o) +
           " has max |tanh(w)| below 1e-12; mapped to zero codes");
      continue;
    }
    for (std::size_t j = 0; j < fan_in; ++j) {
      const double unit = hat[j] / (2.0 * m) + 0.5;
      const std::int64_t c =
          round_half_away(static_cast<double>(n) * std::clamp(unit, 0.0, 1.0));
      q.codes[o * fan_in + j] = static_cast<std::int32_t>(2 * c - n);
    }
  }
  return q;
}

// ---- activations ------------------------------------------------------------

QuantizedTensor quantize_activations(const RealTensor& s, int bits) {
  require_code_bits(bits, "quantize_activations");
  require_finite(s, "quantize_activations");
  const double n = static_cast<double>(levels(bits));
  QuantizedTensor q;
  q.shape = s.shape();
  q.bits = bits;
  q.signedness = Signedness::Unit;
  q.scales = {1.0};
  q.codes.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    q.codes[i] =
        static_cast<std::int32_t>(round_half_away(n * std::clamp(s[i], 0.0, 1.0)));
  }
  return q;
}

RealTensor clamp_ste_grad(const RealTensor& s, const RealTensor& upstream) {
  require_same_shape(s, upstream, "clamp_ste_grad");
  RealTensor g(s.shape());
  for (std::size_t i = 0; i < s.size(); ++i) {
    g[i] = (s[i] >= 0.0 && s[i] <= 1.0) ? upstream[i] : 0.0;
  }
  return g;
}

}  // namespace qbit
