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
#include <functional>
#include <string>
#include <vector>

#include "qbit/dataset.hpp"
#include "qbit/network.hpp"

namespace qbit {

enum class OptimizerKind { SgdMomentum, Adam };

const char* to_string(OptimizerKind k);

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::SgdMomentum;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  // 0-based epoch indices at which the rate is multiplied by lr_factor.
  std::vector<std::size_t> milestones;
  double lr_factor = 0.1;
  std::size_t batch_size = 128;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// base * factor^(number of milestones <= epoch)
double learning_rate_at(const TrainConfig& cfg, std::size_t epoch);

// Updates real-valued masters in place. Weight decay applies only to
// parameters flagged `decay`.
class Optimizer {
 public:
  explicit Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}
  void step(std::vector<Param>& params, double lr);

 private:
  TrainConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::uint64_t t_ = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
};

// "epoch\tlr\ttrain_loss\ttrain_acc\tval_acc", fixed precision.
std::string format_metrics_line(const EpochMetrics& m);
std::string metrics_header();

struct TrainData {
  const Dataset* train = nullptr;
  const Dataset* val = nullptr;  // may be null or empty
  Normalization norm;
  Augmentation augment;
};

struct TrainResult {
  std::vector<EpochMetrics> log;
  std::size_t best_epoch = 0;  // 1-based, by validation accuracy
  double best_val_acc = 0.0;
  std::vector<Tensor> best_state;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Throws NumericFailure carrying epoch and step on divergence.
TrainResult train(Network& net, const TrainConfig& cfg, const TrainData& data,
                  const EpochCallback& on_epoch = {});

// Top-1 accuracy on the fake-quantized path with running batch-norm stats.
// Throws InvalidArgument on an empty set.
double evaluate(Network& net, const Dataset& d, const Normalization& norm,
                std::size_t batch_size = 256);

}  // namespace qbit
