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
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dataset_files.hpp"
#include "qbit/serialize.hpp"
#include "test_support.hpp"

#ifndef QBIT_CLI_PATH
#error "QBIT_CLI_PATH must name the qbit executable"
#endif

namespace qbit {
namespace {

namespace fs = std::filesystem;

struct CliRun {
  int code;
  std::string out;
};

CliRun run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + QBIT_CLI_PATH + " " + args + " 2>&1";
  FILE* p = ::popen(cmd.c_str(), "r");
  if (p == nullptr) return {-1, ""};
  std::string out;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
  const int status = ::pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string value_of(const std::string& out, const std::string& key) {
  const auto pos = out.find(key + "\t");
  if (pos == std::string::npos) return {};
  const auto end = out.find('\n', pos);
  return out.substr(pos + key.size() + 1, end - pos - key.size() - 1);
}

const std::string kConfigDir = QBIT_CONFIG_DIR;

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 64);
  EXPECT_EQ(run("frobnicate").code, 64);
  EXPECT_EQ(run("size-report --arch x").code, 64);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, SizeReportTables) {
  CliRun r = run("size-report --arch " + kConfigDir + "/vgg7.arch --schedule 8-4-2-1-1-1/1 --baseline 2");
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_EQ(value_of(r.out, "average_bitwidth"), "1.06");
  EXPECT_EQ(value_of(r.out, "savings"), "47.06%");
  r = run("size-report --arch " + kConfigDir + "/resnet18.arch --schedule 8-4-2-1 --baseline 2");
  EXPECT_EQ(value_of(r.out, "average_bitwidth"), "1.42");
  r = run("size-report --arch " + kConfigDir + "/resnet20.arch --schedule 2-2-2 --baseline 2");
  EXPECT_EQ(value_of(r.out, "average_bitwidth"), "2.00");
  EXPECT_EQ(value_of(r.out, "savings"), "0.00%");
}

TEST(Cli, SizeReportIsByteIdentical) {
  const std::string args =
      "size-report --arch " + kConfigDir + "/alexnet.arch --schedule 8-4-2-1/1-1 --baseline 2";
  EXPECT_EQ(run(args).out, run(args).out);
}

TEST(Cli, SizeReportGrammarErrors) {
  for (const char* s : {"8-4-x", "8--4", "8/4/2", "9-4-2"}) {
    const CliRun r = run("size-report --arch " + kConfigDir + "/resnet20.arch --schedule " + s +
                      " --baseline 2");
    EXPECT_EQ(r.code, 3) << s << ": " << r.out;
    EXPECT_NE(r.out.find("schedule"), std::string::npos);
  }
  EXPECT_EQ(run("size-report --arch /nonexistent.arch --schedule 4-2-1").code, 3);
  const CliRun r = run("size-report --arch " + kConfigDir + "/resnet20.arch --schedule 3-2-1");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("warning"), std::string::npos);
}

const char* kTinyConfig = R"([architecture]
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

[schedule]
weights = 2-1
activations = 2

[data]
kind = mnist
dir = tiny

[training]
batch_size = 32
epochs = %EPOCHS%
%EXTRA%
)";

class CliTraining : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = testing::scratch_dir("cli");
    fs::create_directories(root_ / "tiny");
    testing::write_mnist(root_ / "tiny", testing::synthetic_dataset({1, 8, 8}, 300, 1), true);
    testing::write_mnist(root_ / "tiny", testing::synthetic_dataset({1, 8, 8}, 50, 2), false);
    fs::create_directories(root_ / "wide");
    testing::write_mnist(root_ / "wide", testing::synthetic_dataset({1, 9, 9}, 20, 3), false);
    fs::create_directories(root_ / "empty");
    testing::write_mnist(root_ / "empty", testing::synthetic_dataset({1, 8, 8}, 0, 3), false);
  }

  static fs::path config(const std::string& name, int epochs, const std::string& extra = "") {
    std::string text = kTinyConfig;
    text.replace(text.find("%EPOCHS%"), 8, std::to_string(epochs));
    text.replace(text.find("%EXTRA%"), 7,
                 extra.find("lr =") == std::string::npos ? extra + "\nlr = 0.05" : extra);
    const fs::path p = root_ / (name + ".cfg");
    std::ofstream(p) << text;
    return p;
  }

  static std::string env() { return "QBIT_DATA_DIR=" + root_.string(); }

  static inline fs::path root_;
};

TEST_F(CliTraining, TrainWritesLogAndLoadableModel) {
  const CliRun r = run("train --config " + config("one", 1).string() + " --seed 3 --out " +
                        (root_ / "out1").string(),
                    env());
  ASSERT_EQ(r.code, 0) << r.out;
  const std::string log = read_text(root_ / "out1" / "metrics.tsv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 1);
  EXPECT_EQ(log.substr(0, 2), "1\t");
  EXPECT_NO_THROW(load_model(root_ / "out1" / "model.qbm"));
  EXPECT_EQ(file_magic(root_ / "out1" / "checkpoint.qbc"), "QBC1");
}

TEST_F(CliTraining, SameSeedSameLog) {
  const auto cfg = config("det", 2).string();
  ASSERT_EQ(run("train --config " + cfg + " --seed 5 --out " + (root_ / "d1").string(), env()).code, 0);
  ASSERT_EQ(run("train --config " + cfg + " --seed 5 --out " + (root_ / "d2").string(), env()).code, 0);
  EXPECT_EQ(read_text(root_ / "d1" / "metrics.tsv"), read_text(root_ / "d2" / "metrics.tsv"));
  EXPECT_EQ(read_text(root_ / "d1" / "model.qbm"), read_text(root_ / "d2" / "model.qbm"));
}

TEST_F(CliTraining, EvalReproducesTrainAccuracyAndPackMatches) {
  const CliRun t = run("train --config " + config("ev", 1).string() + " --out " +
                        (root_ / "ev").string(),
                    env());
  ASSERT_EQ(t.code, 0) << t.out;
  const CliRun e = run("eval --model " + (root_ / "ev" / "model.qbm").string() + " --data tiny", env());
  ASSERT_EQ(e.code, 0) << e.out;
  EXPECT_EQ(value_of(e.out, "accuracy"), value_of(t.out, "test_acc"));
  const CliRun p = run("pack --model " + (root_ / "ev" / "checkpoint.qbc").string() + " --out " +
                    (root_ / "ev" / "packed.qbm").string());
  ASSERT_EQ(p.code, 0) << p.out;
  EXPECT_EQ(read_text(root_ / "ev" / "packed.qbm"), read_text(root_ / "ev" / "model.qbm"));
  const CliRun e2 = run("eval --model " + (root_ / "ev" / "checkpoint.qbc").string() + " --data " +
                     (root_ / "tiny").string());
  EXPECT_EQ(value_of(e2.out, "accuracy"), value_of(t.out, "test_acc"));
}

TEST_F(CliTraining, EvalErrors) {
  ASSERT_EQ(run("train --config " + config("err", 1).string() + " --out " +
                    (root_ / "err").string(),
                env())
                .code,
            0);
  const std::string model = (root_ / "err" / "model.qbm").string();
  CliRun r = run("eval --model " + model + " --data wide", env());
  EXPECT_EQ(r.code, 4) << r.out;
  EXPECT_NE(r.out.find("1x9x9"), std::string::npos);
  EXPECT_EQ(run("eval --model " + model + " --data empty", env()).code, 5);
  EXPECT_EQ(run("eval --model " + model + " --data nowhere", env()).code, 2);
  testing::write_bytes(root_ / "junk.qbm", {'Q', 'B', 'M', '1', 1});
  r = run("eval --model " + (root_ / "junk.qbm").string() + " --data tiny", env());
  EXPECT_EQ(r.code, 4) << r.out;
  EXPECT_NE(r.out.find("byte"), std::string::npos);
  EXPECT_EQ(run("pack --model " + (root_ / "missing.qbc").string() + " --out x").code, 4);
}

TEST_F(CliTraining, CorruptDatasetExitsTwo) {
  fs::create_directories(root_ / "bad");
  testing::write_mnist(root_ / "bad", testing::synthetic_dataset({1, 8, 8}, 5, 1), true);
  testing::write_mnist(root_ / "bad", testing::synthetic_dataset({1, 8, 8}, 5, 1), false);
  std::vector<std::uint8_t> junk;
  testing::put_be32(junk, 0x12345678);
  testing::write_bytes(root_ / "bad" / "t10k-images-idx3-ubyte", junk);
  const CliRun r = run("train --config " + config("bad", 1).string() + " --data bad --out " +
                           (root_ / "bad_out").string(),
                       env());
  EXPECT_EQ(r.code, 2) << r.out;
  EXPECT_NE(r.out.find("byte 0"), std::string::npos);
}

TEST_F(CliTraining, ConfigErrorsExitThree) {
  CliRun r = run("train --config " + config("ms", 3, "milestones = 2,1").string() + " --out " +
                  (root_ / "ms").string(),
              env());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.out.find("training.milestones"), std::string::npos) << r.out;
  r = run("train --config " + (root_ / "nope.cfg").string() + " --out " + (root_ / "n").string(),
          env());
  EXPECT_EQ(r.code, 3);
}

TEST_F(CliTraining, MissingDatasetExitsTwo) {
  const CliRun r = run("train --config " + config("nodata", 1).string() + " --out " +
                    (root_ / "nd").string(),
                    "env -u QBIT_DATA_DIR");
  EXPECT_EQ(r.code, 2) << r.out;
}

TEST_F(CliTraining, DivergenceExitsSix) {
  const CliRun r = run("train --config " + config("nan", 1, "momentum = 0\nlr = 1e300").string() +
                        " --out " + (root_ / "nan").string(),
                    env());
  EXPECT_EQ(r.code, 6) << r.out;
}

}  // namespace
}  // namespace qbit
