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

#include "qbit/network.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "qbit/error.hpp"
#include "qbit/layers.hpp"

namespace qbit {
namespace {

template <typename Fn>
void walk(std::vector<LayerDef>& layers, Fn&& fn) {
  for (auto& l : layers) {
    fn(l);
    walk(l.branch, fn);
    walk(l.shortcut, fn);
  }
}

template <typename Fn>
void walk(const std::vector<LayerDef>& layers, Fn&& fn) {
  for (const auto& l : layers) {
    fn(l);
    walk(l.branch, fn);
    walk(l.shortcut, fn);
  }
}

std::int64_t weight_count(const LayerDef& def, const Shape& in) {
  switch (def.kind) {
    case LayerKind::Conv2d:
      return static_cast<std::int64_t>(def.out_channels * in.at(0) * def.kernel *
                                       def.kernel);
    case LayerKind::Linear:
      return static_cast<std::int64_t>(def.out_channels * shape_size(in));
    case LayerKind::Params:
      return def.param_count;
    default:
      return 0;
  }
}

// Visits weight layers with their input shapes, in definition order.
void walk_shapes(const std::vector<LayerDef>& layers, Shape& shape,
                 const std::function<void(const LayerDef&, const Shape&)>& fn) {
  for (const auto& l : layers) {
    if (l.kind == LayerKind::Residual) {
      Shape b = shape;
      walk_shapes(l.branch, b, fn);
      Shape s = shape;
      walk_shapes(l.shortcut, s, fn);
    }
    if (l.has_weights()) fn(l, shape);
    if (l.kind != LayerKind::Params) shape = infer_shape(l, shape);
  }
}

void check_finite(const Tensor& t, std::size_t index, const std::string& name) {
  if (!t.all_finite()) {
    throw NumericFailure("non-finite value after layer " + std::to_string(index) +
                             " (" + name + ")",
                         static_cast<std::ptrdiff_t>(index));
  }
}

}  // namespace

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::Conv2d: return "conv";
    case LayerKind::Linear: return "fc";
    case LayerKind::BatchNorm: return "bn";
    case LayerKind::ClampAct: return "act";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Residual: return "residual";
    case LayerKind::Params: return "params";
  }
  return "?";
}

std::vector<WeightGroup> NetworkDef::weight_groups() const {
  std::vector<WeightGroup> out;
  auto add = [&](const LayerDef& l, std::int64_t n) {
    const std::string& g = l.group_name();
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const WeightGroup& w) { return w.name == g; });
    if (it == out.end()) {
      out.push_back({g, n, l.section, l.quantizable()});
      return;
    }
    if (it->quantizable != l.quantizable()) {
      throw InvalidArgument("group " + g +
                            " mixes quantized and full-precision layers");
    }
    it->params += n;
  };
  bool shapeless = input.empty();
  if (shapeless) {
    walk(layers, [&](const LayerDef& l) {
      if (!l.has_weights()) return;
      if (l.kind != LayerKind::Params) {
        throw InvalidArgument(l.name + ": parameter count needs an input shape");
      }
      add(l, l.param_count);
    });
    return out;
  }
  Shape shape = input;
  walk_shapes(layers, shape, [&](const LayerDef& l, const Shape& in) {
    add(l, weight_count(l, in));
  });
  return out;
}

void NetworkDef::apply_schedule(const BitwidthSchedule& s) {
  int k_a = kFullPrecisionBits;
  for (const auto& e : s.layers) {
    if (e.quantized) {
      k_a = e.k_a;
      break;
    }
  }
  walk(layers, [&](LayerDef& l) {
    if (!l.has_weights()) return;
    const std::string& g = l.group_name();
    auto it = std::find_if(s.layers.begin(), s.layers.end(),
                           [&](const ScheduleEntry& e) { return e.name == g; });
    if (it == s.layers.end()) {
      throw InvalidArgument("schedule has no entry for group " + g);
    }
    const bool q = it->quantized && l.quantizable();
    l.weight = QuantSpec(q ? it->k_w : kFullPrecisionBits, Role::Weight);
  });
  if (k_a == 1) warn("activation bitwidth 1 requested");

  // Activation bits; the first activation may stay real when the preceding
  // weight layer is unquantized.
  bool seen_weight = false;
  bool first_weight_quantized = true;
  bool first_act = true;
  walk(layers, [&](LayerDef& l) {
    if (l.has_weights() && !seen_weight) {
      seen_weight = true;
      first_weight_quantized = l.quantizable() && l.weight.bits != kFullPrecisionBits;
    }
    if (l.kind != LayerKind::ClampAct) return;
    int bits = k_a;
    if (first_act && !quantize_first_activation && !first_weight_quantized) {
      bits = kFullPrecisionBits;
    }
    first_act = false;
    l.activation = QuantSpec(bits, Role::Activation);
  });
}

BitwidthSchedule NetworkDef::schedule() const {
  int k_a = kFullPrecisionBits;
  walk(layers, [&](const LayerDef& l) {
    if (l.kind == LayerKind::ClampAct && l.activation.bits != kFullPrecisionBits &&
        k_a == kFullPrecisionBits) {
      k_a = l.activation.bits;
    }
  });
  BitwidthSchedule s;
  for (const auto& g : weight_groups()) {
    int bits = kFullPrecisionBits;
    walk(layers, [&](const LayerDef& l) {
      if (l.has_weights() && l.group_name() == g.name) bits = l.weight.bits;
    });
    const bool q = g.quantizable && bits != kFullPrecisionBits;
    s.layers.push_back({g.name, bits, q ? k_a : kFullPrecisionBits, q, g.section});
  }
  return s;
}

bool NetworkDef::trainable() const {
  bool ok = !input.empty();
  walk(layers, [&](const LayerDef& l) {
    if (l.kind == LayerKind::Params) ok = false;
  });
  return ok;
}

Shape NetworkDef::output_shape() const {
  if (input.empty()) throw InvalidArgument("network has no input shape");
  Shape shape = input;
  for (const auto& l : layers) shape = infer_shape(l, shape);
  if (classes != 0 && shape != Shape{classes}) {
    throw InvalidArgument("network output " + shape_to_string(shape) +
                          " does not match " + std::to_string(classes) + " classes");
  }
  return shape;
}

void assign_default_names(NetworkDef& def) {
  std::size_t index = 0;
  walk(def.layers, [&](LayerDef& l) {
    if (l.name.empty()) l.name = std::string(to_string(l.kind)) + std::to_string(index);
    ++index;
    if (l.kind == LayerKind::Linear) l.section = LayerSection::FullyConnected;
    if (l.output) l.section = l.kind == LayerKind::Params ? l.section
                                                         : LayerSection::FullyConnected;
  });
}

// ---- Network ------------------------------------------------------------------------

Network::Network(NetworkDef def, std::uint64_t seed) : def_(std::move(def)) {
  if (!def_.trainable()) {
    throw InvalidArgument("network description has no trainable geometry");
  }
  def_.output_shape();
  std::mt19937_64 rng(seed);
  Shape shape = def_.input;
  layers_ = build_layers(def_.layers, shape, rng);
}

Network::Network(const Network& other)
    : def_(other.def_), generation_(other.generation_) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Network::~Network() = default;

Tensor Network::forward(const Tensor& x, const PassContext& ctx) {
  Shape expect = def_.input;
  if (x.rank() != expect.size() + 1 ||
      !std::equal(expect.begin(), expect.end(), x.shape().begin() + 1)) {
    throw InvalidArgument("input batch " + shape_to_string(x.shape()) +
                          " does not match network input " + shape_to_string(expect));
  }
  ++generation_;
  cache_valid_ = false;
  Tensor y = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    y = layers_[i]->forward(y, ctx);
    check_finite(y, i, layers_[i]->name());
  }
  cache_valid_ = true;
  return y;
}

Tensor Network::backward(const Tensor& grad) {
  if (!cache_valid_) throw InvalidState("backward without a matching forward");
  Tensor g = grad;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  cache_valid_ = false;
  return g;
}

std::vector<Param> Network::params() {
  std::vector<Param> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

void Network::zero_grads() {
  for (auto& p : params()) p.grad->fill(0.0);
}

std::vector<Tensor> Network::state() const {
  std::vector<Tensor*> ptrs;
  for (const auto& l : layers_) l->collect_state(ptrs);
  std::vector<Tensor> out;
  out.reserve(ptrs.size());
  for (auto* p : ptrs) out.push_back(*p);
  return out;
}

void Network::load_state(const std::vector<Tensor>& state) {
  std::vector<Tensor*> ptrs;
  for (auto& l : layers_) l->collect_state(ptrs);
  if (ptrs.size() != state.size()) {
    throw InvalidArgument("state has " + std::to_string(state.size()) +
                          " tensors, network expects " + std::to_string(ptrs.size()));
  }
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    if (ptrs[i]->shape() != state[i].shape()) {
      throw InvalidArgument("state tensor " + std::to_string(i) + " has shape " +
                            shape_to_string(state[i].shape()) + ", expected " +
                            shape_to_string(ptrs[i]->shape()));
    }
  }
  for (std::size_t i = 0; i < ptrs.size(); ++i) *ptrs[i] = state[i];
  cache_valid_ = false;
}

struct NetworkAccess {
  static bool cache_valid(const Network& n) { return n.cache_valid_; }
};

ForwardResult forward_train(Network& net, const Tensor& batch, PassContext ctx) {
  ForwardResult r;
  r.logits = net.forward(batch, ctx);
  r.cache = {&net, net.generation(), batch.shape(), r.logits.shape()};
  return r;
}

Tensor forward_eval(Network& net, const Tensor& batch) {
  return net.forward(batch, {false, QuantizerMode::Quantize});
}

std::vector<ParamGrad> backward_ste(Network& net, const ForwardCache& cache,
                                    const Tensor& loss_grad) {
  if (cache.network != &net || cache.generation != net.generation() ||
      !NetworkAccess::cache_valid(net)) {
    throw InvalidState("forward cache is stale or already consumed");
  }
  if (loss_grad.shape() != cache.output_shape) {
    throw InvalidArgument("loss gradient " + shape_to_string(loss_grad.shape()) +
                          " does not match logits " +
                          shape_to_string(cache.output_shape));
  }
  net.zero_grads();
  net.backward(loss_grad);
  std::vector<ParamGrad> out;
  for (auto& p : net.params()) out.push_back({p.name, *p.grad});
  return out;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw InvalidArgument("logits must be N x C");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) throw InvalidArgument("label count does not match batch");
  LossResult r;
  r.grad = Tensor(logits.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double* z = logits.data() + i * c;
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw RangeViolation("label " + std::to_string(y) + " outside [0, " +
                           std::to_string(c) + ")");
    }
    const std::size_t best = static_cast<std::size_t>(std::max_element(z, z + c) - z);
    if (best == static_cast<std::size_t>(y)) ++r.correct;
    const double m = z[best];
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) sum += std::exp(z[j] - m);
    const double log_sum = std::log(sum) + m;
    r.loss += log_sum - z[y];
    for (std::size_t j = 0; j < c; ++j) {
      r.grad[i * c + j] = (std::exp(z[j] - log_sum) - (j == static_cast<std::size_t>(y))) /
                          static_cast<double>(n);
    }
  }
  r.loss /= static_cast<double>(n);
  return r;
}

}  // namespace qbit
