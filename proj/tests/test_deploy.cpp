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

#include <cmath>
#include <fstream>
#include <random>

#include "qbit/deploy.hpp"
#include "qbit/error.hpp"
#include "qbit/serialize.hpp"
#include "qbit/train.hpp"
#include "test_support.hpp"

namespace qbit {
namespace {

using testing::logits_relative_error;
using testing::parse_net;

const char* kCnn = R"([architecture]
input = 2x8x8
classes = 5
layer = conv name=c0 out=4 kernel=3 pad=1 fixed
layer = bn
layer = act
layer = conv name=c1 out=6 kernel=3 pad=1
layer = bn
layer = act
layer = maxpool kernel=2
layer = residual group=r
layer = conv out=6 kernel=3 pad=1
layer = bn
layer = act
layer = conv out=6 kernel=3 pad=1
layer = bn
layer = end
layer = act
layer = conv name=c2 out=8 kernel=3 stride=2 pad=1
layer = bn
layer = act
layer = avgpool kernel=2
layer = fc name=f1 out=12
layer = bn
layer = act
layer = fc name=f2 out=5 bias output
)";

// Gives batch-norm layers non-trivial running statistics and affine params.
Network warmed(const std::string& schedule, int k_a, std::uint64_t seed) {
  Network net(parse_net(kCnn, schedule, k_a), seed);
  std::mt19937_64 rng(seed + 100);
  for (auto& p : net.params()) {
    if (p.name.find("gamma") != std::string::npos) {
      for (auto& v : p.value->values()) v = std::uniform_real_distribution<double>(0.5, 1.5)(rng);
    } else if (p.name.find("beta") != std::string::npos) {
      for (auto& v : p.value->values()) v = std::uniform_real_distribution<double>(-0.2, 0.6)(rng);
    }
  }
  for (int i = 0; i < 4; ++i) forward_train(net, testing::normal_tensor({16, 2, 8, 8}, rng));
  return net;
}

struct Variant {
  const char* schedule;
  int k_a;
};

class DeployAgreement : public ::testing::TestWithParam<Variant> {};

TEST_P(DeployAgreement, PackedMatchesTrainingPath) {
  const Variant v = GetParam();
  Network net = warmed(v.schedule, v.k_a, 3);
  const PackedModel m = deploy(net);
  std::mt19937_64 rng(4);
  const auto x = testing::normal_tensor({20, 2, 8, 8}, rng);
  const Tensor want = forward_eval(net, x);
  EXPECT_LE(logits_relative_error(infer(m, x), want), 1e-5);
  const PackedModel unmerged = fold_scales(net, {false});
  EXPECT_LE(logits_relative_error(infer(unmerged, x), want), 1e-5);
}

INSTANTIATE_TEST_SUITE_P(Schedules, DeployAgreement,
                         ::testing::Values(Variant{"4-2-1/1", 2}, Variant{"8-4-2/1", 4},
                                           Variant{"1-1-1/1", 2}, Variant{"2-2-2/2", 1},
                                           Variant{"fp", 32}, Variant{"4-2-1/1", 32}));

TEST(Deploy, FullPrecisionStoresRealWeights) {
  Network net = warmed("fp", 32, 5);
  const PackedModel m = deploy(net);
  auto ps = net.params();
  for (const auto& op : m.ops) {
    if (!op.has_weights()) continue;
    EXPECT_FALSE(op.quantized());
    for (const auto& p : ps) {
      if (p.name == op.name + ".weight") EXPECT_EQ(op.real_weights.values(), p.value->values());
    }
  }
  EXPECT_EQ(quantized_payload_bytes(m), 0);
}

TEST(Deploy, PayloadMatchesSizeReport) {
  Network net = warmed("4-2-1/1", 2, 6);
  const auto g = net.def().weight_groups();
  const auto r = size_report(net.def().schedule(), quantized_counts(g), 2);
  EXPECT_EQ(quantized_payload_bytes(deploy(net)), r.total_bytes);
}

TEST(Fold, IdentityBatchNormBecomesScales) {
  Network net(parse_net(R"([architecture]
input = 1x1x6
classes = 3
layer = fc name=f out=3
layer = bn eps=0
)", "4", 2), 7);
  const PackedModel m = deploy(net);
  ASSERT_EQ(m.ops.size(), 1u);
  const DeployOp& op = m.ops[0];
  EXPECT_EQ(op.k_w, 4);
  for (std::size_t o = 0; o < 3; ++o) {
    EXPECT_EQ(op.mult[o], 1.0 / 15.0);
    EXPECT_EQ(op.add[o], 0.0);
  }
}

TEST(Fold, NoBatchNormKeepsExplicitMultiplier) {
  Network net(parse_net(R"([architecture]
input = 1x1x6
classes = 3
layer = fc name=f out=4
layer = act
layer = fc name=g out=3 bias output
)", "1", 2), 8);
  const PackedModel m = deploy(net);
  ASSERT_EQ(m.ops.size(), 3u);
  auto ps = net.params();
  const auto alpha = binarize_channels(*ps[0].value).scales;
  for (std::size_t o = 0; o < 4; ++o) EXPECT_EQ(m.ops[0].mult[o], alpha[o]);
  std::mt19937_64 rng(9);
  const auto x = testing::normal_tensor({100, 1, 1, 6}, rng);
  EXPECT_LE(logits_relative_error(infer(m, x), forward_eval(net, x)), 1e-5);
}

TEST(Infer, ShapeMismatch) {
  Network net = warmed("4-2-1/1", 2, 10);
  EXPECT_THROW(infer(deploy(net), RealTensor({1, 2, 7, 8})), FormatError);
}

TEST(Serialize, ModelRoundTrip) {
  Network net = warmed("4-2-1/1", 2, 11);
  PackedModel m = deploy(net);
  m.normalization = {{0.1, 0.2}, {0.3, 0.4}};
  const auto bytes = encode_model(m);
  ASSERT_GE(bytes.size(), 4u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "QBM1");
  const PackedModel back = decode_model(bytes);
  EXPECT_EQ(back, m);
  EXPECT_EQ(encode_model(back), bytes);
  std::mt19937_64 rng(12);
  const auto x = testing::normal_tensor({8, 2, 8, 8}, rng);
  EXPECT_EQ(infer(back, x), infer(m, x));
}

TEST(Serialize, ModelRejectsCorruption) {
  Network net = warmed("4-2-1/1", 2, 13);
  const auto bytes = encode_model(deploy(net));
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(decode_model(bad), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    std::vector<std::uint8_t> t(bytes.begin(), bytes.begin() + static_cast<long>(cut));
    try {
      decode_model(t);
      ADD_FAILURE() << "truncation at " << cut << " accepted";
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
    }
  }
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_THROW(decode_model(longer), FormatError);
}

TEST(Serialize, CheckpointRoundTrip) {
  Network net = warmed("4-2-1/1", 2, 14);
  const Checkpoint c{net.def(), {{0.5, 0.5}, {0.25, 0.25}}, net.state()};
  const Checkpoint back = decode_checkpoint(encode_checkpoint(c));
  EXPECT_EQ(back.def, c.def);
  EXPECT_EQ(back.normalization, c.normalization);
  EXPECT_EQ(back.state, c.state);
  Network rebuilt(back.def, 0);
  rebuilt.load_state(back.state);
  EXPECT_EQ(encode_model(deploy(rebuilt)), encode_model(deploy(net)));
}

TEST(Serialize, FilesAndMagic) {
  const auto dir = testing::scratch_dir("serialize");
  Network net = warmed("4-2-1/1", 2, 15);
  save_model(deploy(net), dir / "m.qbm");
  save_checkpoint({net.def(), {}, net.state()}, dir / "c.qbc");
  EXPECT_EQ(file_magic(dir / "m.qbm"), "QBM1");
  EXPECT_EQ(file_magic(dir / "c.qbc"), "QBC1");
  EXPECT_EQ(load_model(dir / "m.qbm"), deploy(net));
  EXPECT_THROW(load_model(dir / "c.qbc"), FormatError);
  EXPECT_THROW(load_model(dir / "missing.qbm"), FormatError);
}

TEST(EvaluatePacked, SaveLoadGivesIdenticalAccuracy) {
  const auto dir = testing::scratch_dir("eval_packed");
  Network net = warmed("4-2-1/1", 2, 16);
  PackedModel m = deploy(net);
  m.normalization = {{0.5, 0.5}, {0.5, 0.5}};
  Dataset d = testing::synthetic_dataset({2, 8, 8}, 300, 17);
  d.classes = 5;
  for (auto& l : d.labels) l %= 5;
  save_model(m, dir / "m.qbm");
  EXPECT_EQ(evaluate_packed(load_model(dir / "m.qbm"), d), evaluate_packed(m, d));
  Dataset empty;
  empty.sample_shape = {2, 8, 8};
  EXPECT_THROW(evaluate_packed(m, empty), InvalidArgument);
  Dataset wrong = testing::synthetic_dataset({1, 8, 8}, 3, 1);
  EXPECT_THROW(evaluate_packed(m, wrong), FormatError);
}

}  // namespace
}  // namespace qbit
