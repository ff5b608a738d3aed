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

#include <gtest/gtest.h>

#include <random>

#include "kernel_cases.hpp"
#include "qbit/error.hpp"
#include "qbit/kernels.hpp"

namespace qbit {
namespace {

using namespace kernels;

TEST(GemmReference, IdentityAndScalar) {
  const RealTensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  std::mt19937_64 rng(1);
  const auto x = testing::random_tensor({3, 4}, rng);
  EXPECT_EQ(gemm_reference(eye, x), x);
  EXPECT_EQ(gemm_reference(RealTensor({1, 1}, {2}), RealTensor({1, 1}, {3}))[0], 6.0);
}

TEST(GemmReference, MatchesTripleLoop) {
  std::mt19937_64 rng(2);
  const auto a = testing::random_tensor({7, 5}, rng), b = testing::random_tensor({5, 3}, rng);
  const auto c = gemm_reference(a, b);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      long double s = 0;
      for (std::size_t l = 0; l < 5; ++l) s += static_cast<long double>(a[i * 5 + l]) * b[l * 3 + j];
      EXPECT_EQ(c[i * 3 + j], static_cast<double>(s));
    }
}

TEST(GemmReference, DimensionMismatchThrows) {
  EXPECT_THROW(gemm_reference(RealTensor({2, 3}), RealTensor({2, 3})), InvalidArgument);
}

TEST(GemmIntCodes, ZeroActivationsGiveZero) {
  std::mt19937_64 rng(3);
  const auto w = testing::random_codes({4, 6}, 4, Signedness::SymmetricOdd, rng, true);
  auto a = testing::random_codes({6, 2}, 2, Signedness::Unit, rng);
  std::fill(a.codes.begin(), a.codes.end(), 0);
  const auto c = gemm_int_codes(w, a);
  for (double v : c.values()) EXPECT_EQ(v, 0.0);
}

TEST(GemmIntCodes, OneBitAgreesWithXnor) {
  std::mt19937_64 rng(4);
  const auto w = testing::random_codes({5, 70}, 1, Signedness::Binary, rng, true);
  const auto a = testing::random_codes({70, 3}, 1, Signedness::Binary, rng);
  EXPECT_EQ(gemm_int_codes_accumulate(w, a), gemm_xnor_accumulate(pack(w), pack(a)));
}

TEST(GemmIntCodes, RejectsUnitWeights) {
  std::mt19937_64 rng(5);
  const auto w = testing::random_codes({2, 2}, 2, Signedness::Unit, rng);
  const auto a = testing::random_codes({2, 2}, 2, Signedness::Unit, rng);
  EXPECT_THROW(gemm_int_codes(w, a), InvalidArgument);
}

TEST(Accumulators, WideningBound) {
  std::mt19937_64 rng(6);
  const auto w = testing::random_codes({1, 4}, 8, Signedness::SymmetricOdd, rng);
  const auto a = testing::random_codes({4, 1}, 8, Signedness::Unit, rng);
  EXPECT_EQ(accumulator_bound(4, w, a), 4 * 255 * 255);
  EXPECT_FALSE(needs_wide_accumulator(accumulator_bound(4, w, a)));
  EXPECT_TRUE(needs_wide_accumulator(accumulator_bound(40000, w, a)));
}

TEST(Accumulators, WideCaseIsExact) {
  std::mt19937_64 rng(7);
  const std::size_t n = 40000;
  auto w = testing::random_codes({1, n}, 8, Signedness::SymmetricOdd, rng);
  auto a = testing::random_codes({n, 1}, 8, Signedness::Unit, rng);
  std::fill(w.codes.begin(), w.codes.end(), 255);
  std::fill(a.codes.begin(), a.codes.end(), 255);
  EXPECT_EQ(gemm_int_codes_accumulate(w, a).values[0], std::int64_t{255} * 255 * 40000);
}

TEST(Xnor, SelfAndComplement) {
  for (std::size_t n : {1u, 63u, 64u, 65u, 200u, 4096u}) {
    BitMatrix a(1, n), b(1, n);
    for (std::size_t i = 0; i < n; i += 3) a.set(0, i);
    for (std::size_t i = 0; i < n; ++i) if (i % 3) b.set(0, i);
    EXPECT_EQ(xnor_dot(a.row(0), a.row(0), n), static_cast<std::int64_t>(n));
    EXPECT_EQ(xnor_dot(a.row(0), b.row(0), n), -static_cast<std::int64_t>(n));
  }
}

TEST(Xnor, LengthMismatchThrows) {
  std::mt19937_64 rng(8);
  const auto w = testing::random_codes({2, 5}, 1, Signedness::Binary, rng);
  const auto a = testing::random_codes({4, 2}, 1, Signedness::Binary, rng);
  EXPECT_THROW(gemm_xnor(pack(w), pack(a)), InvalidArgument);
}

TEST(Bitserial, PlaneCountMismatchThrows) {
  std::mt19937_64 rng(9);
  const auto w = testing::random_codes({2, 5}, 1, Signedness::Binary, rng);
  auto planes = to_bitplanes(testing::random_codes({5, 2}, 3, Signedness::Unit, rng));
  planes.planes.pop_back();
  EXPECT_THROW(gemm_bitserial(pack(w), planes), InvalidArgument);
}

TEST(Bitserial, ZeroActivations) {
  std::mt19937_64 rng(10);
  const auto w = testing::random_codes({3, 9}, 1, Signedness::Binary, rng);
  auto a = testing::random_codes({9, 4}, 3, Signedness::Unit, rng);
  std::fill(a.codes.begin(), a.codes.end(), 0);
  for (auto v : gemm_bitserial_accumulate(pack(w), to_bitplanes(a)).values) EXPECT_EQ(v, 0);
}

TEST(KernelEquivalence, RandomizedSample) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 150; ++i) {
    EXPECT_EQ(testing::check_xnor(rng), "");
    EXPECT_EQ(testing::check_xnor_padding(rng), "");
    EXPECT_EQ(testing::check_bitserial(rng), "");
    EXPECT_EQ(testing::check_int_codes(rng), "");
  }
}

TEST(Conv, OneByOneIsPerPixelGemm) {
  std::mt19937_64 rng(13);
  const auto x = testing::random_codes({1, 3, 4, 5}, 2, Signedness::Unit, rng);
  const auto w = testing::random_codes({2, 3, 1, 1}, 2, Signedness::SymmetricOdd, rng, true);
  const auto acc = conv2d_accumulate(x, w, {1, 0});
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t s = 0; s < 20; ++s) {
      std::int64_t want = 0;
      for (std::size_t c = 0; c < 3; ++c) want += w.codes[o * 3 + c] * x.codes[c * 20 + s];
      EXPECT_EQ(acc.values[o * 20 + s], want);
    }
}

TEST(Conv, IdentityKernel) {
  std::mt19937_64 rng(14);
  const auto x = testing::random_codes({1, 1, 5, 5}, 3, Signedness::Unit, rng);
  QuantizedTensor w;
  w.shape = {1, 1, 3, 3};
  w.bits = 2;
  w.signedness = Signedness::SymmetricOdd;
  w.codes = {-1, -1, -1, -1, 3, -1, -1, -1, -1};
  w.scales = {1.0};
  testing::ConvCase cc{1, 1, 5, 5, 1, 3, 1, 1};
  EXPECT_EQ(conv2d_accumulate(x, w, {1, 1}).values, testing::direct_conv(x, w, cc, 5, 5));
}

TEST(Conv, OutputExtentAndGeometryErrors) {
  EXPECT_EQ(conv_output_extent(7, 3, 2, 1), 4u);
  EXPECT_EQ(conv_output_extent(16, 5, 3, 2), 6u);
  EXPECT_THROW(conv_output_extent(2, 5, 1, 1), InvalidArgument);
  EXPECT_THROW(conv_output_extent(5, 3, 0, 0), InvalidArgument);
}

TEST(Conv, PathSelection) {
  std::mt19937_64 rng(15);
  const auto xb = testing::random_codes({1, 1, 4, 4}, 1, Signedness::Binary, rng);
  const auto xu = testing::random_codes({1, 1, 4, 4}, 2, Signedness::Unit, rng);
  const auto wb = testing::random_codes({1, 1, 3, 3}, 1, Signedness::Binary, rng);
  const auto wq = testing::random_codes({1, 1, 3, 3}, 2, Signedness::SymmetricOdd, rng);
  EXPECT_EQ(select_conv_path(xb, wb, {1, 0}), GemmPath::Xnor);
  EXPECT_EQ(select_conv_path(xb, wb, {1, 1}), GemmPath::IntCodes);
  EXPECT_EQ(select_conv_path(xu, wb, {1, 1}), GemmPath::BitSerial);
  EXPECT_EQ(select_conv_path(xu, wq, {1, 1}), GemmPath::IntCodes);
}

TEST(Conv, RandomGeometries) {
  std::mt19937_64 rng(16);
  for (int i = 0; i < 60; ++i) EXPECT_EQ(testing::check_conv(rng, i), "");
}

TEST(Conv, QuantizedMatchesReferenceOnReconstruction) {
  std::mt19937_64 rng(17);
  const auto x = testing::random_codes({2, 3, 6, 7}, 2, Signedness::Unit, rng);
  const auto w = testing::random_codes({4, 3, 3, 3}, 4, Signedness::SymmetricOdd, rng, true);
  const auto q = conv2d_quantized(x, w, {2, 1});
  const auto r = conv2d_reference(x.reconstruct(), w.reconstruct(), {}, {2, 1});
  ASSERT_EQ(q.shape(), r.shape());
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_NEAR(q[i], r[i], 1e-12);
}

}  // namespace
}  // namespace qbit
