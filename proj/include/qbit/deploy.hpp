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
#include <string>
#include <vector>

#include "qbit/bittensor.hpp"
#include "qbit/dataset.hpp"
#include "qbit/network.hpp"

namespace qbit {

// One step of the deployed graph. Weight ops compute
//   y[o] = acc[o] * mult[o] + add[o]
// where acc is the dot product of weight numerators (odd codes, +-1, or real
// values at 32 bits) with input numerators (activation codes, or real values).
struct DeployOp {
  LayerKind kind = LayerKind::Conv2d;
  std::string name;

  // Conv2d / Linear
  std::size_t in_features = 0;  // input channels for conv
  std::size_t out_features = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  int k_w = kFullPrecisionBits;
  int k_in = kFullPrecisionBits;  // bits of the incoming activation codes
  PackedTensor weights;           // k_w < 32
  Tensor real_weights;            // k_w == 32
  // Weight ops and unmerged batch-norm: per-channel affine.
  std::vector<double> mult;
  std::vector<double> add;

  // ClampAct
  int bits = kFullPrecisionBits;

  // Residual
  std::vector<DeployOp> branch;
  std::vector<DeployOp> shortcut;

  bool quantized() const { return has_weights() && k_w != kFullPrecisionBits; }
  bool has_weights() const {
    return kind == LayerKind::Conv2d || kind == LayerKind::Linear;
  }
  friend bool operator==(const DeployOp&, const DeployOp&) = default;
};

struct PackedModel {
  Shape input;
  std::size_t classes = 0;
  Normalization normalization;  // input preprocessing the model was trained with
  std::vector<DeployOp> ops;

  friend bool operator==(const PackedModel&, const PackedModel&) = default;
};

struct FoldOptions {
  // Absorb each batch-norm that directly follows a weight op into that op's
  // affine; otherwise batch-norm stays a separate op.
  bool merge_batch_norm = true;
};

// Re-quantizes every weight layer from its masters, packs the codes and
// folds the quantizer scales (and optionally frozen batch-norm statistics)
// into per-channel affines.
PackedModel fold_scales(const Network& net, const FoldOptions& opts = {});
PackedModel deploy(const Network& net);

// Logits [N x classes] using the integer kernels wherever both operands are
// codes. Throws FormatError if the batch does not match the model input.
Tensor infer(const PackedModel& model, const Tensor& batch);

// Top-1 accuracy of the packed inference path. Throws InvalidArgument on an
// empty set and FormatError if the samples do not match the model input.
double evaluate_packed(const PackedModel& model, const Dataset& d,
                       std::size_t batch_size = 256);

// Bytes of packed weight payload over quantized weight ops.
std::int64_t quantized_payload_bytes(const PackedModel& model);

}  // namespace qbit
