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

#include "qbit/deploy.hpp"

#include <algorithm>
#include <cmath>

#include "qbit/error.hpp"
#include "qbit/kernels.hpp"
#include "qbit/layers.hpp"

namespace qbit {
namespace {

double steps_of(int bits, Signedness s) {
  return s == Signedness::Binary ? 1.0 : static_cast<double>(levels(bits));
}

// ---- folding ----------------------------------------------------------------------------

struct Folder {
  FoldOptions opts;

  DeployOp weight_op(const Layer& layer, int k_in) const {
    DeployOp op;
    op.name = layer.name();
    op.kind = layer.kind();
    op.k_in = k_in;
    const Tensor* w = nullptr;
    const Tensor* bias = nullptr;
    const WeightQuantizer* quant = nullptr;
    if (const auto* c = dynamic_cast<const Conv2dLayer*>(&layer)) {
      w = &c->weight();
      bias = c->has_bias() ? &c->bias() : nullptr;
      quant = &c->quantizer();
      op.in_features = w->dim(1);
      op.kernel = c->kernel();
      op.stride = c->stride();
      op.padding = c->padding();
    } else {
      const auto& l = dynamic_cast<const LinearLayer&>(layer);
      w = &l.weight();
      bias = l.has_bias() ? &l.bias() : nullptr;
      quant = &l.quantizer();
      op.in_features = w->dim(1);
    }
    op.out_features = w->dim(0);
    op.k_w = quant->bits();
    const double in_steps =
        k_in == kFullPrecisionBits ? 1.0 : static_cast<double>(levels(k_in));
    op.mult.assign(op.out_features, 1.0 / in_steps);
    if (op.k_w != kFullPrecisionBits) {
      const QuantizedTensor q = quant->quantize(*w);
      const double w_steps = steps_of(q.bits, q.signedness);
      for (std::size_t o = 0; o < op.out_features; ++o) {
        op.mult[o] = q.scale_of(o * q.channel_stride()) / (w_steps * in_steps);
      }
      op.weights = pack(q);
    } else {
      op.real_weights = *w;
    }
    op.add.assign(op.out_features, 0.0);
    if (bias != nullptr) std::copy(bias->values().begin(), bias->values().end(), op.add.begin());
    return op;
  }

  static DeployOp batch_norm_op(const BatchNormLayer& bn) {
    DeployOp op;
    op.kind = LayerKind::BatchNorm;
    op.name = bn.name();
    op.out_features = bn.channels();
    op.mult.resize(bn.channels());
    op.add.resize(bn.channels());
    for (std::size_t c = 0; c < bn.channels(); ++c) {
      const double g = bn.gamma()[c] / std::sqrt(bn.running_var()[c] + bn.eps());
      op.mult[c] = g;
      op.add[c] = bn.beta()[c] - bn.running_mean()[c] * g;
    }
    return op;
  }

  static void merge(DeployOp& w, const BatchNormLayer& bn) {
    for (std::size_t c = 0; c < bn.channels(); ++c) {
      const double g = bn.gamma()[c] / std::sqrt(bn.running_var()[c] + bn.eps());
      w.mult[c] = w.mult[c] * g;
      w.add[c] = (w.add[c] - bn.running_mean()[c]) * g + bn.beta()[c];
    }
  }

  // `k_in` tracks the code width of the value flowing into each op.
  std::vector<DeployOp> fold(const std::vector<std::unique_ptr<Layer>>& layers,
                             int& k_in) const {
    std::vector<DeployOp> out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const Layer& l = *layers[i];
      switch (l.kind()) {
        case LayerKind::Conv2d:
        case LayerKind::Linear: {
          DeployOp op = weight_op(l, k_in);
          if (opts.merge_batch_norm && i + 1 < layers.size() &&
              layers[i + 1]->kind() == LayerKind::BatchNorm) {
            merge(op, dynamic_cast<const BatchNormLayer&>(*layers[i + 1]));
            ++i;
          }
          out.push_back(std::move(op));
          k_in = kFullPrecisionBits;
          break;
        }
        case LayerKind::BatchNorm:
          out.push_back(batch_norm_op(dynamic_cast<const BatchNormLayer&>(l)));
          k_in = kFullPrecisionBits;
          break;
        case LayerKind::ClampAct: {
          DeployOp op;
          op.kind = LayerKind::ClampAct;
          op.name = l.name();
          op.bits = dynamic_cast<const ClampActLayer&>(l).bits();
          k_in = op.bits;
          out.push_back(std::move(op));
          break;
        }
        case LayerKind::MaxPool:
        case LayerKind::AvgPool: {
          const auto& p = dynamic_cast<const PoolLayer&>(l);
          DeployOp op;
          op.kind = l.kind();
          op.name = l.name();
          op.kernel = p.kernel();
          op.stride = p.stride();
          if (l.kind() == LayerKind::AvgPool) k_in = kFullPrecisionBits;
          out.push_back(std::move(op));
          break;
        }
        case LayerKind::Residual: {
          const auto& r = dynamic_cast<const ResidualLayer&>(l);
          DeployOp op;
          op.kind = LayerKind::Residual;
          op.name = l.name();
          int kb = k_in, ks = k_in;
          op.branch = fold(r.branch(), kb);
          op.shortcut = fold(r.shortcut(), ks);
          k_in = kFullPrecisionBits;
          out.push_back(std::move(op));
          break;
        }
        case LayerKind::Params:
          throw InvalidArgument(l.name() + ": cannot deploy a parameter-count entry");
      }
    }
    return out;
  }
};

// ---- inference ---------------------------------------------------------------------------

struct Value {
  bool is_codes = false;
  Tensor real;            // when !is_codes
  QuantizedTensor codes;  // unit codes, scale 1

  const Shape& shape() const { return is_codes ? codes.shape : real.shape(); }

  // Codes as plain numbers (no 1/(2^k - 1) factor), or the real values.
  Tensor numerators() const {
    if (!is_codes) return real;
    Tensor t(codes.shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = codes.codes[i];
    return t;
  }
  Tensor to_real() const {
    if (!is_codes) return real;
    Tensor t(codes.shape);
    const double steps = static_cast<double>(levels(codes.bits));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = codes.codes[i] / steps;
    return t;
  }
};

void require_shape(const DeployOp& op, bool ok, const Shape& got) {
  if (!ok) {
    throw FormatError(op.name + ": input shape " + shape_to_string(got) +
                      " does not match the model");
  }
}

Tensor code_numerators(const PackedTensor& p) {
  const QuantizedTensor q = unpack(p);
  Tensor t(q.shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = q.codes[i];
  return t;
}

Tensor affine(std::vector<double> acc, Shape shape, const DeployOp& op) {
  const std::size_t channels = op.out_features;
  const std::size_t spatial = shape_size(shape) / (shape[0] * channels);
  Tensor out(std::move(shape), std::move(acc));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = (i / spatial) % channels;
    out[i] = out[i] * op.mult[c] + op.add[c];
  }
  return out;
}

Tensor run_conv(const DeployOp& op, const Value& x) {
  const Shape& s = x.shape();
  require_shape(op, s.size() == 4 && s[1] == op.in_features, s);
  const kernels::ConvGeometry g{op.stride, op.padding};
  if (x.is_codes && op.quantized()) {
    QuantizedTensor w = unpack(op.weights);
    const kernels::ConvAccumulators acc = kernels::conv2d_accumulate(x.codes, w, g);
    return affine(std::vector<double>(acc.values.begin(), acc.values.end()), acc.shape, op);
  }
  const Tensor w = op.quantized() ? code_numerators(op.weights) : op.real_weights;
  const Tensor y = kernels::conv2d_reference(x.numerators(), w, {}, g);
  return affine(y.values(), y.shape(), op);
}

Tensor run_linear(const DeployOp& op, const Value& x) {
  const Shape& s = x.shape();
  require_shape(op, s.size() >= 2 && shape_size(s) == s[0] * op.in_features, s);
  const std::size_t n = s[0], f = op.in_features, o = op.out_features;
  std::vector<double> acc(n * o);
  if (x.is_codes && op.quantized()) {
    QuantizedTensor w = unpack(op.weights);
    w.shape = {o, f};
    QuantizedTensor a;
    a.shape = {f, n};
    a.bits = x.codes.bits;
    a.signedness = Signedness::Unit;
    a.scales = {1.0};
    a.codes.resize(f * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) a.codes[j * n + i] = x.codes.codes[i * f + j];
    }
    const kernels::Accumulators r =
        w.signedness == Signedness::Binary
            ? kernels::gemm_bitserial_accumulate(pack(w), to_bitplanes(a))
            : kernels::gemm_int_codes_accumulate(w, a);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < o; ++c) acc[i * o + c] = static_cast<double>(r.at(c, i));
    }
  } else {
    const Tensor w =
        (op.quantized() ? code_numerators(op.weights) : op.real_weights).reshaped({o, f});
    const Tensor xn = x.numerators();
    Tensor xt({f, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) xt[j * n + i] = xn[i * f + j];
    }
    const Tensor r = kernels::gemm_reference(w, xt);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t c = 0; c < o; ++c) acc[i * o + c] = r[c * n + i];
    }
  }
  return affine(std::move(acc), {n, o}, op);
}

Value run_pool(const DeployOp& op, const Value& x) {
  const Shape& s = x.shape();
  require_shape(op, s.size() == 4, s);
  const std::size_t n = s[0], c = s[1], h = s[2], w = s[3];
  const std::size_t oh = kernels::conv_output_extent(h, op.kernel, op.stride, 0);
  const std::size_t ow = kernels::conv_output_extent(w, op.kernel, op.stride, 0);
  const bool is_max = op.kind == LayerKind::MaxPool;
  Value out;
  if (is_max && x.is_codes) {
    out.is_codes = true;
    out.codes = x.codes;
    out.codes.shape = {n, c, oh, ow};
    out.codes.codes.assign(n * c * oh * ow, 0);
  } else {
    out.real = Tensor({n, c, oh, ow});
  }
  const Tensor src_real = x.is_codes && is_max ? Tensor() : x.to_real();
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const std::size_t o = (plane * oh + y) * ow + xo;
        double best = -INFINITY, sum = 0.0;
        std::int32_t best_code = 0;
        bool first = true;
        for (std::size_t dy = 0; dy < op.kernel; ++dy) {
          for (std::size_t dx = 0; dx < op.kernel; ++dx) {
            const std::size_t i = plane * h * w + (y * op.stride + dy) * w + xo * op.stride + dx;
            if (out.is_codes) {
              if (first || x.codes.codes[i] > best_code) best_code = x.codes.codes[i];
            } else {
              best = std::max(best, src_real[i]);
              sum += src_real[i];
            }
            first = false;
          }
        }
        if (out.is_codes) {
          out.codes.codes[o] = best_code;
        } else {
          out.real[o] = is_max ? best : sum / static_cast<double>(op.kernel * op.kernel);
        }
      }
    }
  }
  return out;
}

Value run(const std::vector<DeployOp>& ops, Value v) {
  for (const DeployOp& op : ops) {
    switch (op.kind) {
      case LayerKind::Conv2d:
        v = Value{false, run_conv(op, v), {}};
        break;
      case LayerKind::Linear:
        v = Value{false, run_linear(op, v), {}};
        break;
      case LayerKind::BatchNorm: {
        Tensor t = v.to_real();
        require_shape(op, t.rank() >= 2 && t.dim(1) == op.out_features, t.shape());
        v = Value{false, affine(t.values(), t.shape(), op), {}};
        break;
      }
      case LayerKind::ClampAct: {
        Tensor t = v.to_real();
        if (op.bits == kFullPrecisionBits) {
          for (auto& e : t.values()) e = std::clamp(e, 0.0, 1.0);
          v = Value{false, std::move(t), {}};
          break;
        }
        Value q;
        q.is_codes = true;
        q.codes.shape = t.shape();
        q.codes.bits = op.bits;
        q.codes.signedness = Signedness::Unit;
        q.codes.scales = {1.0};
        q.codes.codes.resize(t.size());
        const double steps = static_cast<double>(levels(op.bits));
        for (std::size_t i = 0; i < t.size(); ++i) {
          q.codes.codes[i] =
              static_cast<std::int32_t>(round_half_away(steps * std::clamp(t[i], 0.0, 1.0)));
        }
        v = std::move(q);
        break;
      }
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        v = run_pool(op, v);
        break;
      case LayerKind::Residual: {
        Tensor a = run(op.branch, v).to_real();
        const Tensor b = run(op.shortcut, v).to_real();
        require_shape(op, a.shape() == b.shape(), b.shape());
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        v = Value{false, std::move(a), {}};
        break;
      }
      case LayerKind::Params:
        throw FormatError(op.name + ": parameter-count entry in a deployed model");
    }
  }
  return v;
}

std::int64_t payload_bytes(const std::vector<DeployOp>& ops) {
  std::int64_t total = 0;
  for (const auto& op : ops) {
    if (op.quantized()) total += static_cast<std::int64_t>(op.weights.payload.size());
    total += payload_bytes(op.branch) + payload_bytes(op.shortcut);
  }
  return total;
}

}  // namespace

PackedModel fold_scales(const Network& net, const FoldOptions& opts) {
  PackedModel m;
  m.input = net.def().input;
  m.classes = net.def().classes;
  int k_in = kFullPrecisionBits;
  m.ops = Folder{opts}.fold(net.layers(), k_in);
  return m;
}

PackedModel deploy(const Network& net) { return fold_scales(net, {true}); }

Tensor infer(const PackedModel& model, const Tensor& batch) {
  if (batch.rank() != model.input.size() + 1 ||
      !std::equal(model.input.begin(), model.input.end(), batch.shape().begin() + 1)) {
    throw FormatError("input batch " + shape_to_string(batch.shape()) +
                      " does not match model input " + shape_to_string(model.input));
  }
  return run(model.ops, Value{false, batch, {}}).to_real();
}

double evaluate_packed(const PackedModel& model, const Dataset& d, std::size_t batch_size) {
  if (d.size() == 0) throw InvalidArgument("evaluation set is empty");
  if (d.sample_shape != model.input) {
    throw FormatError("dataset samples " + shape_to_string(d.sample_shape) +
                      " do not match model input " + shape_to_string(model.input));
  }
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  std::vector<int> labels;
  for (std::size_t begin = 0; begin < d.size(); begin += batch_size) {
    const std::size_t end = std::min(d.size(), begin + batch_size);
    idx.resize(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
    const Tensor logits = infer(model, make_batch(d, idx, model.normalization, labels));
    const std::size_t classes = logits.dim(1);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const double* row = logits.data() + i * classes;
      const auto best = static_cast<int>(std::max_element(row, row + classes) - row);
      if (best == labels[i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

std::int64_t quantized_payload_bytes(const PackedModel& model) {
  return payload_bytes(model.ops);
}

}  // namespace qbit
