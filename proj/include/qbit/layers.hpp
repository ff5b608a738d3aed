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

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "qbit/network.hpp"

namespace qbit {

// Fake-quantizer for a weight tensor (axis 0 = output channel).
//   k = 32: identity
//   k = 1:  per-channel binarize, surrogate clip(W, -1, 1)
//   k >= 2: tanh / channel-max pipeline, surrogate tanh(W) / M(W)
class WeightQuantizer {
 public:
  explicit WeightQuantizer(int bits = kFullPrecisionBits) : bits_(bits) {}

  int bits() const { return bits_; }
  Tensor apply(const Tensor& w, QuantizerMode mode);
  // d loss / d W given d loss / d W_effective.
  Tensor backward(const Tensor& w, const Tensor& grad_effective) const;
  // Integer codes of the current master weights (k < 32 only).
  QuantizedTensor quantize(const Tensor& w) const;

 private:
  Tensor surrogate(const Tensor& w) const;
  int bits_;
  Tensor offset_;
};

class Conv2dLayer final : public Layer {
 public:
  Conv2dLayer(const LayerDef& def, std::size_t in_channels, std::mt19937_64& rng);

  LayerKind kind() const override { return LayerKind::Conv2d; }
  const std::string& name() const override { return name_; }
  Tensor forward(const Tensor& x, const PassContext& ctx) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(std::vector<Param>& out) override;
  void collect_state(std::vector<Tensor*>& out) override;
  std::unique_ptr<Layer> clone() const override;

  const Tensor& weight() const { return weight_; }
  Tensor& weight() { return weight_; }
  const Tensor& bias() const { return bias_; }
  bool has_bias() const { return has_bias_; }
  const WeightQuantizer& quantizer() const { return quantizer_; }
  std::size_t kernel() const { return kernel_; }
  std::size_t stride() const { return stride_; }
  std::size_t padding() const { return padding_; }

 private:
  void lower(const double* image, std::size_t h, std::size_t w, double* cols) const;

  std::string name_;
  std::size_t in_channels_, out_channels_, kernel_, stride_, padding_;
  bool has_bias_;
  Tensor weight_, weight_grad_, bias_, bias_grad_;
  WeightQuantizer quantizer_;
  // forward cache
  Tensor effective_;
  std::vector<double> cols_;
  Shape input_shape_;
  std::size_t out_h_ = 0, out_w_ = 0;
};

class LinearLayer final : public Layer {
 public:
  LinearLayer(const LayerDef& def, std::size_t in_features, std::mt19937_64& rng);

  LayerKind kind() const override { return LayerKind::Linear; }
  const std::string& name() const override { return name_; }
  Tensor forward(const Tensor& x, const PassContext& ctx) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(std::vector<Param>& out) override;
  void collect_state(std::vector<Tensor*>& out) override;
  std::unique_ptr<Layer> clone() const override;

  const Tensor& weight() const { return weight_; }
  Tensor& weight() { return weight_; }
  const Tensor& bias() const { return bias_; }
  bool has_bias() const { return has_bias_; }
  const WeightQuantizer& quantizer() const { return quantizer_; }

 private:
  std::string name_;
  std::size_t in_features_, out_features_;
  bool has_bias_;
  Tensor weight_, weight_grad_, bias_, bias_grad_;
  WeightQuantizer quantizer_;
  Tensor effective_;
  Tensor input_;
  Shape input_shape_;
};

class BatchNormLayer final : public Layer {
 public:
  BatchNormLayer(const LayerDef& def, std::size_t channels);

  LayerKind kind() const override { return LayerKind::BatchNorm; }
  const std::string& name() const override { return name_; }
  Tensor forward(const Tensor& x, const PassContext& ctx) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(std::vector<Param>& out) override;
  void collect_state(std::vector<Tensor*>& out) override;
  std::unique_ptr<Layer> clone() const override;

  std::size_t channels() const { return channels_; }
  double eps() const { return eps_; }
  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }
  const Tensor& gamma() const { return gamma_; }
  const Tensor& beta() const { return beta_; }
  const Tensor& running_mean() const { return running_mean_; }
  const Tensor& running_var() const { return running_var_; }

 private:
  std::string name_;
  std::size_t channels_;
  double eps_, momentum_;
  Tensor gamma_, beta_, gamma_grad_, beta_grad_, running_mean_, running_var_;
  // forward cache
  bool used_batch_stats_ = true;
  Tensor normalized_;
  std::vector<double> inv_std_;
  Shape input_shape_;
};

class ClampActLayer final : public Layer {
 public:
  explicit ClampActLayer(const LayerDef& def);

  LayerKind kind() const override { return LayerKind::ClampAct; }
  const std::string& name() const override { return name_; }
  Tensor forward(const Tensor& x, const PassContext& ctx) override;
  Tensor backward(const Tensor& grad) override;
  std::unique_ptr<Layer> clone() const override;

  int bits() const { return bits_; }

 private:
  std::string name_;
  int bits_;
  Tensor input_;
  Tensor offset_;
};

class PoolLayer final : public Layer {
 public:
  PoolLayer(const LayerDef& def);

  LayerKind kind() const override { return max_ ? LayerKind::MaxPool : LayerKind::AvgPool; }
  const std::string& name() const override { return name_; }
  Tensor forward(const Tensor& x, const PassContext& ctx) override;
  Tensor backward(const Tensor& grad) override;
  std::unique_ptr<Layer> clone() const override;

  bool is_max() const { return max_; }
  std::size_t kernel() const { return kernel_; }
  std::size_t stride() const { return stride_; }

 private:
  std::string name_;
  bool max_;
  std::size_t kernel_, stride_;
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
};

class ResidualLayer final : public Layer {
 public:
  ResidualLayer(const LayerDef& def, const Shape& input, std::mt19937_64& rng);
  ResidualLayer(const ResidualLayer& other);

  LayerKind kind() const override { return LayerKind::Residual; }
  const std::string& name() const override { return name_; }
  Tensor forward(const Tensor& x, const PassContext& ctx) override;
  Tensor backward(const Tensor& grad) override;
  void collect_params(std::vector<Param>& out) override;
  void collect_state(std::vector<Tensor*>& out) override;
  std::unique_ptr<Layer> clone() const override;

  const std::vector<std::unique_ptr<Layer>>& branch() const { return branch_; }
  const std::vector<std::unique_ptr<Layer>>& shortcut() const { return shortcut_; }

 private:
  std::string name_;
  std::vector<std::unique_ptr<Layer>> branch_;
  std::vector<std::unique_ptr<Layer>> shortcut_;
};

// Builds runtime layers for `defs`, propagating `shape` (C x H x W, or
// features) through them.
std::vector<std::unique_ptr<Layer>> build_layers(const std::vector<LayerDef>& defs,
                                                 Shape& shape,
                                                 std::mt19937_64& rng);

// Shape after one layer, without building it. Throws InvalidArgument on
// inconsistent geometry.
Shape infer_shape(const LayerDef& def, const Shape& in);

}  // namespace qbit
