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

#include "qbit/config.hpp"
#include "qbit/error.hpp"
#include "qbit/experiment.hpp"

namespace qbit {
namespace {

template <typename F>
ConfigError config_error(F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e;
  }
  ADD_FAILURE() << "no ConfigError";
  return ConfigError("", 0, "");
}

TEST(ConfigFile, SectionsCommentsAndRepeats) {
  const auto cfg = ConfigFile::parse(
      "# comment\n[a]\nx = 1\n  y=two words  # trailing\n[b]\nl = p\nl = q\n");
  EXPECT_EQ(cfg.get_int("a", "x"), 1);
  EXPECT_EQ(cfg.get_string("a", "y"), "two words");
  ASSERT_EQ(cfg.all("b", "l").size(), 2u);
  EXPECT_EQ(cfg.all("b", "l")[1]->value, "q");
  EXPECT_EQ(cfg.all("b", "l")[1]->line, 7u);
  EXPECT_EQ(cfg.get_double("a", "missing", 2.5), 2.5);
}

TEST(ConfigFile, ErrorsCarryLineAndField) {
  auto e = config_error([] { ConfigFile::parse("[a]\nnot a pair\n"); });
  EXPECT_EQ(e.line(), 2u);
  const auto cfg = ConfigFile::parse("[a]\nx = 1.5q\nx2 = 1\nx2 = 2\n");
  e = config_error([&] { cfg.get_double("a", "x"); });
  EXPECT_EQ(e.field(), "a.x");
  EXPECT_EQ(e.line(), 2u);
  e = config_error([&] { cfg.get_int("a", "x2"); });
  EXPECT_EQ(e.field(), "a.x2");
  e = config_error([&] { cfg.get_int("a", "nope"); });
  EXPECT_EQ(e.field(), "a.nope");
  e = config_error([&] { cfg.require_known("a", {"x"}); });
  EXPECT_EQ(e.field(), "a.x2");
}

TEST(ConfigFile, IntList) {
  const auto cfg = ConfigFile::parse("[t]\nm = 80, 120,160\ne =\n");
  EXPECT_EQ(parse_int_list(*cfg.find("t", "m")), (std::vector<std::int64_t>{80, 120, 160}));
  EXPECT_TRUE(parse_int_list(*cfg.find("t", "e")).empty());
}

const char* kNet = R"([architecture]
input = 1x8x8
classes = 4
layer = conv name=c1 out=4 kernel=3 pad=1 fixed
layer = bn
layer = act
layer = residual group=stage
layer = conv out=4 kernel=3 pad=1
layer = bn
layer = shortcut
layer = conv out=4 kernel=1
layer = end
layer = act
layer = maxpool kernel=2
layer = fc name=f1 out=16
layer = act
layer = fc name=out out=4 bias output
)";

TEST(Architecture, ParsesResidualGroups) {
  const NetworkDef net = parse_architecture(ConfigFile::parse(kNet));
  EXPECT_EQ(net.input, (Shape{1, 8, 8}));
  EXPECT_EQ(net.output_shape(), (Shape{4}));
  const auto g = net.weight_groups();
  ASSERT_EQ(g.size(), 4u);
  EXPECT_EQ(g[0].name, "c1");
  EXPECT_FALSE(g[0].quantizable);
  EXPECT_EQ(g[1].name, "stage");
  EXPECT_EQ(g[1].params, 4 * 4 * 9 + 4 * 4);
  EXPECT_EQ(g[2].section, LayerSection::FullyConnected);
  EXPECT_EQ(g[2].params, 4 * 4 * 4 * 16);
  EXPECT_FALSE(g[3].quantizable);
}

TEST(Architecture, ScheduleAppliesPerGroup) {
  NetworkDef net = parse_architecture(ConfigFile::parse(kNet));
  apply_schedule_text(net, "2/1", 2);
  const auto s = net.schedule();
  ASSERT_EQ(s.layers.size(), 4u);
  EXPECT_EQ(s.layers[0].k_w, 32);
  EXPECT_EQ(s.layers[1].k_w, 2);
  EXPECT_EQ(s.layers[2].k_w, 1);
  EXPECT_EQ(s.layers[3].k_w, 32);
  EXPECT_EQ(s.layers[1].k_a, 2);
  EXPECT_THROW(apply_schedule_text(net, "2-1-1", 2), ConfigError);
  apply_schedule_text(net, "fp", 32);
  for (const auto& e : net.schedule().layers) EXPECT_EQ(e.k_w, 32);
}

TEST(Architecture, Errors) {
  auto e = config_error([] {
    parse_architecture(ConfigFile::parse("[architecture]\nlayer = conv out=4\n"));
  });
  EXPECT_EQ(e.line(), 2u);
  e = config_error([] {
    parse_architecture(ConfigFile::parse("[architecture]\nlayer = warp\n"));
  });
  EXPECT_EQ(e.field(), "architecture.layer");
  e = config_error([] {
    parse_architecture(
        ConfigFile::parse("[architecture]\ninput = 1x4x4\nclasses = 2\nlayer = conv out=2 "
                          "kernel=9\nlayer = fc out=2 output\n"));
  });
  (void)e;
  EXPECT_THROW(parse_architecture(ConfigFile::parse("[architecture]\nlayer = residual\n")),
               ConfigError);
  EXPECT_THROW(parse_architecture(ConfigFile::parse("[architecture]\nlayer = end\n")),
               ConfigError);
}

TEST(Experiment, SectionsAndDefaults) {
  const std::string text = std::string(kNet) +
                           "[schedule]\nweights = 2/1\nactivations = 4\n"
                           "[data]\nkind = mnist\nmean = 0.1\nstd = 0.3\nvalidation = 5\n"
                           "[training]\noptimizer = adam\nlr = 0.01\nmilestones = 2,3\n"
                           "epochs = 4\nseed = 9\n";
  const Experiment x = parse_experiment(ConfigFile::parse(text));
  EXPECT_EQ(x.schedule.activations, 4);
  EXPECT_EQ(x.net.schedule().layers[1].k_a, 4);
  EXPECT_EQ(x.data.normalization.mean, std::vector<double>{0.1});
  EXPECT_EQ(x.data.validation_denominator, 5u);
  EXPECT_EQ(x.train.optimizer, OptimizerKind::Adam);
  EXPECT_EQ(x.train.milestones, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(x.train.epochs, 4u);
  EXPECT_EQ(x.train.seed, 9u);
  EXPECT_EQ(x.train.batch_size, 128u);
}

TEST(Experiment, MilestoneOrderNamesField) {
  const std::string text = std::string(kNet) + "[training]\nmilestones = 5,3\n";
  const auto e = config_error([&] { parse_experiment(ConfigFile::parse(text)); });
  EXPECT_EQ(e.field(), "training.milestones");
}

TEST(Experiment, UnknownSectionOrKeyRejected) {
  EXPECT_THROW(parse_experiment(ConfigFile::parse(std::string(kNet) + "[extra]\na = 1\n")),
               ConfigError);
  const auto e = config_error(
      [] { parse_experiment(ConfigFile::parse(std::string(kNet) + "[training]\nlr_decay = 1\n")); });
  EXPECT_EQ(e.field(), "training.lr_decay");
}

}  // namespace
}  // namespace qbit
