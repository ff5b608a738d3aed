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

#include "qbit/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "qbit/error.hpp"

namespace qbit {
namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why) {
  throw ConfigError("training." + field + ": " + why, 0, "training." + field);
}

}  // namespace

const char* to_string(OptimizerKind k) {
  return k == OptimizerKind::SgdMomentum ? "sgd" : "adam";
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) bad("lr", "must be a non-negative number");
  if (!(momentum >= 0.0 && momentum < 1.0)) bad("momentum", "must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) bad("weight_decay", "must be non-negative");
  if (!(lr_factor > 0.0)) bad("lr_factor", "must be positive");
  if (batch_size == 0) bad("batch_size", "must be positive");
  if (epochs == 0) bad("epochs", "must be positive");
  for (std::size_t i = 1; i < milestones.size(); ++i) {
    if (milestones[i] <= milestones[i - 1]) bad("milestones", "must be strictly increasing");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) bad("beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) bad("beta2", "must lie in [0, 1)");
  if (!(adam_eps > 0.0)) bad("eps", "must be positive");
}

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch) {
  const auto passed = std::count_if(cfg.milestones.begin(), cfg.milestones.end(),
                                    [&](std::size_t m) { return m <= epoch; });
  return cfg.lr * std::pow(cfg.lr_factor, static_cast<double>(passed));
}

void Optimizer::step(std::vector<Param>& params, double lr) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value->shape());
      if (cfg_.optimizer == OptimizerKind::Adam) v_.emplace_back(p.value->shape());
    }
  }
  if (m_.size() != params.size()) throw InvalidState("optimizer parameter set changed");
  ++t_;
  const double wd = cfg_.weight_decay;
  if (cfg_.optimizer == OptimizerKind::SgdMomentum) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& w = *params[i].value;
      const Tensor& g = *params[i].grad;
      Tensor& v = m_[i];
      const double decay = params[i].decay ? wd : 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) {
        v[j] = cfg_.momentum * v[j] + g[j] + decay * w[j];
        w[j] -= lr * v[j];
      }
    }
    return;
  }
  const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = *params[i].value;
    const Tensor& g = *params[i].grad;
    const double decay = params[i].decay ? wd : 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] + decay * w[j];
      m_[i][j] = b1 * m_[i][j] + (1 - b1) * gj;
      v_[i][j] = b2 * v_[i][j] + (1 - b2) * gj * gj;
      w[j] -= lr * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + cfg_.adam_eps);
    }
  }
}

std::string metrics_header() { return "epoch\tlr\ttrain_loss\ttrain_acc\tval_acc"; }

std::string format_metrics_line(const EpochMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu\t%.6g\t%.6f\t%.4f\t%.4f", m.epoch, m.lr,
                m.train_loss, m.train_acc, m.val_acc);
  return buf;
}

double evaluate(Network& net, const Dataset& d, const Normalization& norm,
                std::size_t batch_size) {
  if (d.size() == 0) throw InvalidArgument("evaluation set is empty");
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  std::vector<int> labels;
  for (std::size_t begin = 0; begin < d.size(); begin += batch_size) {
    const std::size_t end = std::min(d.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const Tensor x = make_batch(d, idx, norm, labels);
    correct += softmax_cross_entropy(forward_eval(net, x), labels).correct;
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

TrainResult train(Network& net, const TrainConfig& cfg, const TrainData& data,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.train == nullptr || data.train->size() == 0) {
    throw InvalidArgument("training set is empty");
  }
  const Dataset& ds = *data.train;
  const bool has_val = data.val != nullptr && data.val->size() > 0;
  std::mt19937_64 rng(cfg.seed);
  Optimizer opt(cfg);
  TrainResult result;
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> labels;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0, step = 0;
    for (std::size_t begin = 0; begin < ds.size(); begin += cfg.batch_size, ++step) {
      const std::size_t end = std::min(ds.size(), begin + cfg.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Tensor x = make_batch(ds, idx, data.norm, labels, data.augment, &rng);
      LossResult loss;
      try {
        ForwardResult fwd = forward_train(net, x);
        loss = softmax_cross_entropy(fwd.logits, labels);
        if (!std::isfinite(loss.loss)) {
          throw NumericFailure("non-finite loss", -1);
        }
        net.zero_grads();
        net.backward(loss.grad);
      } catch (const NumericFailure& e) {
        throw NumericFailure(std::string(e.what()) + " at epoch " +
                                 std::to_string(epoch + 1) + ", step " +
                                 std::to_string(step),
                             e.layer(), static_cast<std::ptrdiff_t>(epoch + 1),
                             static_cast<std::ptrdiff_t>(step));
      }
      auto params = net.params();
      opt.step(params, lr);
      for (const auto& p : params) {
        if (!p.value->all_finite()) {
          throw NumericFailure(p.name + " became non-finite at epoch " +
                                   std::to_string(epoch + 1) + ", step " + std::to_string(step),
                               -1, static_cast<std::ptrdiff_t>(epoch + 1),
                               static_cast<std::ptrdiff_t>(step));
        }
      }
      loss_sum += loss.loss * static_cast<double>(idx.size());
      correct += loss.correct;
    }
    EpochMetrics m;
    m.epoch = epoch + 1;
    m.lr = lr;
    m.train_loss = loss_sum / static_cast<double>(ds.size());
    m.train_acc = static_cast<double>(correct) / static_cast<double>(ds.size());
    m.val_acc = has_val ? evaluate(net, *data.val, data.norm) : m.train_acc;
    result.log.push_back(m);
    if (result.best_epoch == 0 || m.val_acc > result.best_val_acc) {
      result.best_epoch = m.epoch;
      result.best_val_acc = m.val_acc;
      result.best_state = net.state();
    }
    if (on_epoch) on_epoch(m);
  }
  return result;
}

}  // namespace qbit
