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

#include <filesystem>
#include <string>

#include "qbit/config.hpp"
#include "qbit/dataset.hpp"
#include "qbit/deploy.hpp"
#include "qbit/network.hpp"
#include "qbit/schedule.hpp"
#include "qbit/serialize.hpp"
#include "qbit/train.hpp"

namespace qbit {

// [architecture]
//   input = CxHxW          (optional for count-only descriptions)
//   classes = N
//   layer = conv name=c1 out=16 kernel=3 stride=1 pad=1 [group=g] [bias] [fixed] [output]
//   layer = fc out=10 [bias] [fixed] [output]
//   layer = bn | act | maxpool kernel=2 stride=2 | avgpool kernel=8 stride=8
//   layer = params name=fc6 count=37748736 section=conv|fc [group=g] [fixed] [output]
//   layer = residual [name=b1] [group=g]  ...  layer = shortcut  ...  layer = end
NetworkDef parse_architecture(const ConfigFile& cfg);

struct DataConfig {
  DatasetKind kind = DatasetKind::MnistIdx;
  std::string dir;
  Normalization normalization;
  Augmentation augment;
  std::size_t validation_denominator = 10;  // 0 disables the split
  std::size_t train_limit = 0;              // 0 = all samples
  std::size_t test_limit = 0;
};

struct ScheduleConfig {
  std::string weights = "fp";  // schedule string, or "fp" for full precision
  int activations = 2;
  bool quantize_first_activation = true;
};

struct Experiment {
  NetworkDef net;
  DataConfig data;
  ScheduleConfig schedule;
  TrainConfig train;
};

DataConfig parse_data_config(const ConfigFile& cfg);
ScheduleConfig parse_schedule_config(const ConfigFile& cfg);
TrainConfig parse_train_config(const ConfigFile& cfg);

// Sets weight and activation bits from a schedule string ("fp" keeps every
// layer at full precision). Throws ConfigError on grammar or count errors.
void apply_schedule_text(NetworkDef& net, const std::string& text, int k_a);

// Parses every section and applies the schedule to the network.
Experiment parse_experiment(const ConfigFile& cfg);
Experiment load_experiment(const std::filesystem::path& path);

struct ExperimentData {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Loads both splits from `dir` (data.dir when empty, resolved against
// QBIT_DATA_DIR), applies the sample limits and the validation split. Throws
// ConfigError if the samples do not match architecture.input.
ExperimentData load_experiment_data(const Experiment& x, const std::string& dir = {});

struct ExperimentOutcome {
  TrainResult result;
  Checkpoint checkpoint;  // weights of the best validation epoch
  PackedModel model;      // deployed from the checkpoint
  double test_accuracy = 0.0;
};

// Trains, restores the best validation epoch, deploys, and evaluates the
// packed model on the test split.
ExperimentOutcome run_experiment(const Experiment& x, const ExperimentData& data,
                                 const EpochCallback& on_epoch = {});

}  // namespace qbit
