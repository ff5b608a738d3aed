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
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qbit/quant.hpp"
#include "qbit/schedule.hpp"
#include "qbit/tensor.hpp"

namespace qbit {

enum class LayerKind : std::uint8_t {
  Conv2d = 0,
  Linear = 1,
  BatchNorm = 2,
  ClampAct = 3,
  MaxPool = 4,
  AvgPool = 5,
  Residual = 6,
  Params = 7,  // parameter-count placeholder, for size accounting only
};

const char* to_string(LayerKind k);

struct LayerDef {
  LayerKind kind = LayerKind::Conv2d;
  std::string name;
  std::string group;  // schedule group; defaults to the layer name

  // conv / linear / pooling geometry
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool bias = false;
  bool output = false;  // classifier layer, kept at full precision
  bool fixed = false;   // kept at full precision (e.g. input layer)

  QuantSpec weight{kFullPrecisionBits, Role::Weight};
  QuantSpec activation{kFullPrecisionBits, Role::Activation};

  double bn_eps = 1e-5;
  double bn_momentum = 0.9;

  // Params placeholders
  std::int64_t param_count = 0;
  LayerSection section = LayerSection::Conv;

  // Residual: output = branch(x) + shortcut(x); empty shortcut = identity.
  std::vector<LayerDef> branch;
  std::vector<LayerDef> shortcut;

  bool has_weights() const {
    return kind == LayerKind::Conv2d || kind == LayerKind::Linear ||
           kind == LayerKind::Params;
  }
  bool quantizable() const { return has_weights() && !output && !fixed; }
  const std::string& group_name() const { return group.empty() ? name : group; }

  friend bool operator==(const LayerDef&, const LayerDef&) = default;
};

struct NetworkDef {
  Shape input;  // C x H x W; may be empty for count-only descriptions
  std::size_t classes = 0;
  std::vector<LayerDef> layers;
  // When false, the activation following an unquantized input layer stays
  // real-valued.
  bool quantize_first_activation = true;

  // Weight groups in first-appearance order, with parameter counts.
  std::vector<WeightGroup> weight_groups() const;
  // Sets k_w per group and k_a on activation layers.
  void apply_schedule(const BitwidthSchedule& s);
  BitwidthSchedule schedule() const;
  // True when every layer has trainable geometry (no Params placeholders).
  bool trainable() const;
  // Validates geometry end to end and returns the output shape.
  Shape output_shape() const;

  friend bool operator==(const NetworkDef&, const NetworkDef&) = default;
};

// Names every unnamed layer "<kind><index>" and assigns the schedule-relevant
// fields; used by config parsing.
void assign_default_names(NetworkDef& def);

// ---- runtime graph ----------------------------------------------------------------

// How quantizers behave during a forward pass.
//   Quantize:        normal fake-quantization
//   RecordOffsets:   quantize, and remember q(x) - s(x) where s is the
//                    straight-through surrogate
//   FrozenSurrogate: output s(x) + recorded offset; the derivative of this
//                    function is exactly the straight-through gradient
enum class QuantizerMode { Quantize, RecordOffsets, FrozenSurrogate };

struct PassContext {
  bool batch_stats = true;  // batch-norm uses batch statistics
  QuantizerMode quantizers = QuantizerMode::Quantize;
};

struct Param {
  std::string name;
  Tensor* value = nullptr;
  Tensor* grad = nullptr;
  bool decay = false;  // weight decay applies (conv / linear weights)
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerKind kind() const = 0;
  virtual const std::string& name() const = 0;
  virtual Tensor forward(const Tensor& x, const PassContext& ctx) = 0;
  // Uses state cached by the last forward; accumulates parameter gradients.
  virtual Tensor backward(const Tensor& grad) = 0;
  virtual void collect_params(std::vector<Param>& out) { (void)out; }
  // Parameters plus non-trainable state (batch-norm running statistics).
  virtual void collect_state(std::vector<Tensor*>& out) { (void)out; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

class Network {
 public:
  Network(NetworkDef def, std::uint64_t seed);
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;
  ~Network();

  const NetworkDef& def() const { return def_; }
  const std::vector<std::unique_ptr<Layer>>& layers() const { return layers_; }

  Tensor forward(const Tensor& x, const PassContext& ctx);
  Tensor backward(const Tensor& grad);

  std::vector<Param> params();
  void zero_grads();

  std::vector<Tensor> state() const;
  void load_state(const std::vector<Tensor>& state);

  std::uint64_t generation() const { return generation_; }

 private:
  friend struct NetworkAccess;
  NetworkDef def_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::uint64_t generation_ = 0;
  bool cache_valid_ = false;
};

// ---- training-path API ---------------------------------------------------------------

struct ForwardCache {
  const Network* network = nullptr;
  std::uint64_t generation = 0;
  Shape input_shape;
  Shape output_shape;
};

struct ForwardResult {
  Tensor logits;
  ForwardCache cache;
};

// Fake-quantized forward retaining real-valued masters. Throws
// NumericFailure naming the layer if a non-finite value appears.
ForwardResult forward_train(Network& net, const Tensor& batch,
                            PassContext ctx = {});

// Forward with running batch-norm statistics.
Tensor forward_eval(Network& net, const Tensor& batch);

struct ParamGrad {
  std::string name;
  Tensor grad;
};

// Straight-through backward. Throws InvalidState if `cache` is not from the
// most recent forward of `net` or was already consumed.
std::vector<ParamGrad> backward_ste(Network& net, const ForwardCache& cache,
                                    const Tensor& loss_grad);

struct LossResult {
  double loss = 0.0;  // mean over the batch
  Tensor grad;        // d loss / d logits
  std::size_t correct = 0;
};

LossResult softmax_cross_entropy(const Tensor& logits,
                                 std::span<const int> labels);

}  // namespace qbit
