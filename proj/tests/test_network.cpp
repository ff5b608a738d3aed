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
#include <limits>
#include <random>

#include "qbit/error.hpp"
#include "qbit/kernels.hpp"
#include "qbit/train.hpp"
#include "test_support.hpp"

namespace qbit {
namespace {

using testing::parse_net;

const char* kToy = R"([architecture]
input = 1x2x3
classes = 3
layer = fc name=f1 out=5
layer = act
layer = fc name=f2 out=3 bias output
)";

const char* kSmallCnn = R"([architecture]
input = 2x6x6
classes = 4
layer = conv name=c1 out=3 kernel=3 pad=1 bias
layer = bn
layer = act
layer = maxpool kernel=2
layer = conv name=c2 out=4 kernel=3
layer = bn
layer = act
layer = avgpool kernel=1
layer = fc name=f1 out=4 bias output
)";

Param& param(std::vector<Param>& ps, const std::string& name) {
  for (auto& p : ps) if (p.name == name) return p;
  throw std::runtime_error("no param " + name);
}

RealTensor linear(const RealTensor& x, const RealTensor& w, const RealTensor* b) {
  const std::size_t n = x.dim(0), in = w.dim(1), out = w.dim(0);
  RealTensor wt({in, out});
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) wt[i * out + o] = w[o * in + i];
  RealTensor y = kernels::gemm_reference(x.reshaped({n, in}), wt);
  if (b) for (std::size_t r = 0; r < n; ++r) for (std::size_t o = 0; o < out; ++o) y[r * out + o] += (*b)[o];
  return y;
}

TEST(Forward, FullPrecisionMatchesPlainNetwork) {
  Network net(parse_net(kToy), 1);
  std::mt19937_64 rng(2);
  const auto x = testing::random_tensor({4, 1, 2, 3}, rng, -2, 2);
  auto ps = net.params();
  RealTensor h = linear(x, *param(ps, "f1.weight").value, nullptr);
  for (auto& v : h.values()) v = std::clamp(v, 0.0, 1.0);
  const RealTensor want = linear(h, *param(ps, "f2.weight").value, param(ps, "f2.bias").value);
  const RealTensor got = forward_train(net, x).logits;
  ASSERT_EQ(got.shape(), want.shape());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-14);
}

TEST(Forward, OneBitLinearIsBinarizeThenGemm) {
  Network net(parse_net(R"([architecture]
input = 1x1x7
classes = 3
layer = fc name=f out=3
)", "1", 32), 4);
  std::mt19937_64 rng(5);
  const auto x = testing::random_tensor({2, 1, 1, 7}, rng);
  auto ps = net.params();
  const RealTensor wq = binarize_channels(*param(ps, "f.weight").value).reconstruct();
  const RealTensor want = linear(x, wq, nullptr);
  const RealTensor got = forward_train(net, x).logits;
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-14);
}

TEST(Forward, ZeroNetworkGivesZeroLogitsBeforeBias) {
  Network net(parse_net(kSmallCnn, "2-1", 2), 3);
  for (auto& p : net.params()) {
    if (p.name.find("gamma") == std::string::npos) p.value->fill(0.0);
  }
  const RealTensor x({2, 2, 6, 6});
  const auto out = forward_train(net, x);
  for (double v : out.logits.values()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, NanReportsLayer) {
  Network net(parse_net(kToy), 1);
  RealTensor x({1, 1, 2, 3});
  x[2] = std::numeric_limits<double>::quiet_NaN();
  try {
    forward_train(net, x);
    FAIL() << "expected NumericFailure";
  } catch (const NumericFailure& e) {
    EXPECT_EQ(e.layer(), 0);
  }
}

TEST(Forward, InputShapeChecked) {
  Network net(parse_net(kToy), 1);
  EXPECT_THROW(forward_train(net, RealTensor({1, 1, 3, 2})), InvalidArgument);
}

TEST(Backward, FullPrecisionFiniteDifferences) {
  Network net(parse_net(kToy), 7);
  std::mt19937_64 rng(8);
  const auto x = testing::random_tensor({6, 1, 2, 3}, rng, -1, 2);
  EXPECT_LT(testing::surrogate_gradient_error(net, x, testing::random_labels(6, 3, rng)), 1e-4);
}

TEST(Backward, QuantizedSurrogateFiniteDifferences) {
  for (const char* sched : {"2", "1", "4"}) {
    Network net(parse_net(kToy, sched, 2), 9);
    std::mt19937_64 rng(10);
    const auto x = testing::random_tensor({6, 1, 2, 3}, rng, -1, 2);
    EXPECT_LT(testing::surrogate_gradient_error(net, x, testing::random_labels(6, 3, rng)), 1e-4)
        << sched;
  }
}

TEST(Backward, ConvNetSurrogateFiniteDifferences) {
  Network net(parse_net(kSmallCnn, "4-2", 2), 11);
  std::mt19937_64 rng(12);
  const auto x = testing::random_tensor({3, 2, 6, 6}, rng, -1, 2);
  EXPECT_LT(testing::surrogate_gradient_error(net, x, testing::random_labels(3, 4, rng)), 1e-4);
}

TEST(Backward, ZeroUpstreamGivesZeroGrads) {
  Network net(parse_net(kSmallCnn, "2-1", 2), 13);
  std::mt19937_64 rng(14);
  const auto r = forward_train(net, testing::random_tensor({2, 2, 6, 6}, rng));
  for (const auto& g : backward_ste(net, r.cache, RealTensor(r.logits.shape()))) {
    for (double v : g.grad.values()) EXPECT_EQ(v, 0.0) << g.name;
  }
}

TEST(Backward, StaleCacheRejected) {
  Network net(parse_net(kToy), 1);
  std::mt19937_64 rng(1);
  const auto x = testing::random_tensor({2, 1, 2, 3}, rng);
  const auto first = forward_train(net, x);
  forward_train(net, x);
  EXPECT_THROW(backward_ste(net, first.cache, RealTensor(first.logits.shape())), InvalidState);
  const auto fresh = forward_train(net, x);
  EXPECT_NO_THROW(backward_ste(net, fresh.cache, RealTensor(fresh.logits.shape())));
  EXPECT_THROW(backward_ste(net, fresh.cache, RealTensor(fresh.logits.shape())), InvalidState);
  Network other(parse_net(kToy), 1);
  const auto theirs = forward_train(other, x);
  EXPECT_THROW(backward_ste(net, theirs.cache, RealTensor(theirs.logits.shape())), InvalidState);
}

TEST(Residual, ZeroBranchIsIdentity) {
  Network net(parse_net(R"([architecture]
input = 2x4x4
layer = residual
layer = conv name=a out=2 kernel=3 pad=1
layer = conv name=b out=2 kernel=3 pad=1
layer = end
)", "2-1", 2), 3);
  for (auto& p : net.params()) p.value->fill(0.0);
  std::mt19937_64 rng(4);
  const auto x = testing::random_tensor({2, 2, 4, 4}, rng);
  EXPECT_EQ(forward_train(net, x).logits.values(), x.values());
}

TEST(BatchNorm, EvalUsesRunningStatistics) {
  Network net(parse_net(R"([architecture]
input = 1x1x2
layer = bn
)"), 1);
  std::mt19937_64 rng(2);
  for (int i = 0; i < 3; ++i) forward_train(net, testing::random_tensor({8, 1, 1, 2}, rng, 0, 4));
  const auto state = net.state();
  // gamma, beta, running mean, running var for one channel
  ASSERT_EQ(state.size(), 4u);
  const double g = state[0][0], b = state[1][0], mu = state[2][0], var = state[3][0];
  RealTensor x({1, 1, 1, 2}, {0.3, 2.0});
  const auto y = forward_eval(net, x);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(y[i], (x[i] - mu) / std::sqrt(var + 1e-5) * g + b, 1e-12);
  }
}

TEST(Loss, SoftmaxCrossEntropy) {
  const RealTensor logits({2, 3}, {0, 0, 0, 10, 0, 0});
  const std::vector<int> labels = {1, 0};
  const auto r = softmax_cross_entropy(logits, labels);
  const double l1 = std::log(3.0);
  const double l2 = std::log(1 + 2 * std::exp(-10.0));
  EXPECT_NEAR(r.loss, (l1 + l2) / 2, 1e-12);
  EXPECT_EQ(r.correct, 1u);
  EXPECT_NEAR(r.grad[1], (1.0 / 3 - 1) / 2, 1e-12);
  EXPECT_THROW(softmax_cross_entropy(logits, std::vector<int>{1, 3}), RangeViolation);
  EXPECT_THROW(softmax_cross_entropy(logits, std::vector<int>{1}), InvalidArgument);
}

TEST(Network, CopyIsIndependent) {
  Network a(parse_net(kSmallCnn, "2-1", 2), 5);
  Network b = a;
  std::mt19937_64 rng(6);
  const auto x = testing::random_tensor({2, 2, 6, 6}, rng);
  EXPECT_EQ(forward_train(a, x).logits, forward_train(b, x).logits);
  b.params()[0].value->fill(0.5);
  EXPECT_NE(forward_train(a, x).logits, forward_train(b, x).logits);
}

TEST(Network, StateRoundTrip) {
  Network a(parse_net(kSmallCnn, "2-1", 2), 5);
  Network b(parse_net(kSmallCnn, "2-1", 2), 6);
  b.load_state(a.state());
  std::mt19937_64 rng(7);
  const auto x = testing::random_tensor({2, 2, 6, 6}, rng);
  EXPECT_EQ(forward_eval(a, x), forward_eval(b, x));
  auto bad = a.state();
  bad.pop_back();
  EXPECT_THROW(b.load_state(bad), InvalidArgument);
}

TEST(LearningRate, StepDecay) {
  TrainConfig cfg;
  cfg.lr = 0.1;
  cfg.milestones = {80, 120, 160};
  cfg.lr_factor = 0.1;
  const std::pair<std::size_t, double> want[] = {{0, 0.1},    {79, 0.1},    {80, 0.01},
                                                 {119, 0.01}, {120, 1e-3},  {159, 1e-3},
                                                 {160, 1e-4}, {199, 1e-4}};
  for (auto [epoch, lr] : want) EXPECT_DOUBLE_EQ(learning_rate_at(cfg, epoch), lr) << epoch;
}

TEST(TrainConfig, Validation) {
  TrainConfig cfg;
  cfg.milestones = {5, 3};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.milestones = {};
  cfg.lr = -1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.lr = 0.1;
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Optimizer, WeightDecayOnlyTouchesDecayParams) {
  Network net(parse_net(kSmallCnn, "2-1", 2), 8);
  std::vector<Param> ps = net.params();
  std::vector<Tensor> before;
  for (const auto& p : ps) before.push_back(*p.value);
  const QuantizedTensor codes_before = binarize_channels(*param(ps, "c2.weight").value);
  net.zero_grads();
  TrainConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.01;
  Optimizer opt(cfg);
  opt.step(ps, 0.1);
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const Tensor& w = *ps[i].value;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double want = ps[i].decay ? before[i][j] - 0.1 * 0.01 * before[i][j] : before[i][j];
      EXPECT_DOUBLE_EQ(w[j], want) << ps[i].name;
    }
  }
  EXPECT_EQ(binarize_channels(*param(ps, "c2.weight").value).codes, codes_before.codes);
}

const char* kTinyMnist = R"([architecture]
input = 1x8x8
classes = 10
layer = conv name=c1 out=4 kernel=3 pad=1
layer = bn
layer = act
layer = maxpool kernel=2
layer = fc name=f1 out=16
layer = bn
layer = act
layer = fc name=f2 out=10 bias output
)";

TEST(Train, ZeroLearningRateLeavesWeights) {
  Network net(parse_net(kTinyMnist, "2-1", 2), 1);
  const Dataset d = testing::synthetic_dataset({1, 8, 8}, 64, 3);
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.batch_size = 16;
  const auto before = net.params();
  std::vector<Tensor> values;
  for (const auto& p : before) values.push_back(*p.value);
  train(net, cfg, {&d, nullptr, {{0.5}, {0.5}}, {}});
  const auto after = net.params();
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_EQ(*after[i].value, values[i]);
}

TEST(Train, DeterministicPerSeed) {
  const Dataset d = testing::synthetic_dataset({1, 8, 8}, 200, 4);
  const auto [tr, val] = split_validation(d, 10);
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.epochs = 2;
  cfg.batch_size = 32;
  cfg.seed = 17;
  auto run = [&] {
    Network net(parse_net(kTinyMnist, "2-1", 2), cfg.seed);
    std::vector<std::string> lines;
    auto r = train(net, cfg, {&tr, &val, {{0.5}, {0.5}}, {1, true}},
                   [&](const EpochMetrics& m) { lines.push_back(format_metrics_line(m)); });
    return std::make_pair(lines, r.best_state);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  ASSERT_EQ(a.first.size(), 2u);
  EXPECT_EQ(a.first[0].substr(0, 2), "1\t");
}

TEST(Train, LogsOneLinePerEpochAndTracksBest) {
  const Dataset d = testing::synthetic_dataset({1, 8, 8}, 120, 5);
  const auto [tr, val] = split_validation(d, 4);
  EXPECT_EQ(val.size(), 30u);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Adam;
  cfg.lr = 1e-3;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.milestones = {1};
  Network net(parse_net(kTinyMnist, "2-1", 2), 2);
  const auto r = train(net, cfg, {&tr, &val, {{0.5}, {0.5}}, {}});
  ASSERT_EQ(r.log.size(), 3u);
  EXPECT_DOUBLE_EQ(r.log[1].lr, 1e-4);
  double best = -1;
  for (const auto& m : r.log) best = std::max(best, m.val_acc);
  EXPECT_EQ(r.best_val_acc, best);
  EXPECT_EQ(r.log[r.best_epoch - 1].val_acc, best);
}

TEST(Train, DivergenceReportsEpochAndStep) {
  const Dataset d = testing::synthetic_dataset({1, 8, 8}, 64, 6);
  TrainConfig cfg;
  cfg.lr = 1e300;
  cfg.momentum = 0.0;
  cfg.batch_size = 16;
  Network net(parse_net(kTinyMnist), 3);
  try {
    train(net, cfg, {&d, nullptr, {{0.5}, {0.5}}, {}});
    FAIL() << "expected NumericFailure";
  } catch (const NumericFailure& e) {
    EXPECT_EQ(e.epoch(), 1);
    EXPECT_GE(e.step(), 1);
  }
}

TEST(Evaluate, EmptySetThrows) {
  Network net(parse_net(kTinyMnist), 3);
  Dataset empty;
  empty.sample_shape = {1, 8, 8};
  EXPECT_THROW(evaluate(net, empty, {{0.5}, {0.5}}), InvalidArgument);
}

}  // namespace
}  // namespace qbit
