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

#include "qbit/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "qbit/error.hpp"
#include "qbit/kernels.hpp"

namespace qbit {
namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

Tensor uniform_init(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

void require_rank(const Tensor& x, std::size_t rank, const std::string& who) {
  if (x.rank() != rank) {
    throw InvalidArgument(who + ": expected rank-" + std::to_string(rank) +
                          " input, got " + shape_to_string(x.shape()));
  }
}

std::size_t features_of(const Shape& per_sample) { return shape_size(per_sample); }

}  // namespace

// ---- WeightQuantizer ----------------------------------------------------------------

QuantizedTensor WeightQuantizer::quantize(const Tensor& w) const {
  if (bits_ == 1) return binarize_channels(w);
  return quantize_weights(w, bits_);
}

Tensor WeightQuantizer::surrogate(const Tensor& w) const {
  Tensor s(w.shape());
  if (bits_ == kFullPrecisionBits) return w;
  const std::size_t rows = w.dim(0);
  const std::size_t fan_in = w.size() / rows;
  if (bits_ == 1) {
    for (std::size_t i = 0; i < w.size(); ++i) s[i] = std::clamp(w[i], -1.0, 1.0);
    return s;
  }
  for (std::size_t o = 0; o < rows; ++o) {
    double m = 0.0;
    for (std::size_t j = 0; j < fan_in; ++j) {
      s[o * fan_in + j] = std::tanh(w[o * fan_in + j]);
      m = std::max(m, std::abs(s[o * fan_in + j]));
    }
    for (std::size_t j = 0; j < fan_in; ++j) {
      s[o * fan_in + j] = m < kDegenerateChannelEpsilon ? 0.0 : s[o * fan_in + j] / m;
    }
  }
  return s;
}

Tensor WeightQuantizer::apply(const Tensor& w, QuantizerMode mode) {
  if (bits_ == kFullPrecisionBits) return w;
  if (mode == QuantizerMode::FrozenSurrogate) {
    if (offset_.shape() != w.shape()) {
      throw InvalidState("weight quantizer: no recorded offsets to freeze");
    }
    Tensor s = surrogate(w);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] += offset_[i];
    return s;
  }
  Tensor q = quantize(w).reconstruct();
  if (mode == QuantizerMode::RecordOffsets) {
    offset_ = surrogate(w);
    for (std::size_t i = 0; i < q.size(); ++i) offset_[i] = q[i] - offset_[i];
  }
  return q;
}

Tensor WeightQuantizer::backward(const Tensor& w, const Tensor& g) const {
  if (bits_ == kFullPrecisionBits) return g;
  if (bits_ == 1) return binarize_ste_grad(w, g);
  const std::size_t rows = w.dim(0);
  const std::size_t fan_in = w.size() / rows;
  Tensor out(w.shape());
  std::vector<double> u(fan_in);
  for (std::size_t o = 0; o < rows; ++o) {
    double m = 0.0;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < fan_in; ++j) {
      u[j] = std::tanh(w[o * fan_in + j]);
      if (std::abs(u[j]) > m) {
        m = std::abs(u[j]);
        arg = j;
      }
    }
    const double* gr = g.data() + o * fan_in;
    double* dst = out.data() + o * fan_in;
    if (m < kDegenerateChannelEpsilon) {
      for (std::size_t j = 0; j < fan_in; ++j) dst[j] = gr[j] * (1.0 - u[j] * u[j]);
      continue;
    }
    // s_j = u_j / M with M = |u_arg|.
    double dot = 0.0;
    for (std::size_t j = 0; j < fan_in; ++j) dot += gr[j] * u[j];
    for (std::size_t j = 0; j < fan_in; ++j) {
      double gu = gr[j] / m;
      if (j == arg) gu -= std::copysign(1.0, u[arg]) * dot / (m * m);
      dst[j] = gu * (1.0 - u[j] * u[j]);
    }
  }
  return out;
}

// ---- Conv2dLayer --------------------------------------------------------------------

Conv2dLayer::Conv2dLayer(const LayerDef& def, std::size_t in_channels,
                         std::mt19937_64& rng)
    : name_(def.name),
      in_channels_(in_channels),
      out_channels_(def.out_channels),
      kernel_(def.kernel),
      stride_(def.stride),
      padding_(def.padding),
      has_bias_(def.bias),
      quantizer_(def.weight.bits) {
  const std::size_t fan_in = in_channels_ * kernel_ * kernel_;
  weight_ = uniform_init({out_channels_, in_channels_, kernel_, kernel_}, fan_in, rng);
  weight_grad_ = Tensor(weight_.shape());
  bias_ = Tensor({has_bias_ ? out_channels_ : 0});
  bias_grad_ = Tensor(bias_.shape());
}

Tensor Conv2dLayer::forward(const Tensor& x, const PassContext& ctx) {
  require_rank(x, 4, name_);
  if (x.dim(1) != in_channels_) {
    throw InvalidArgument(name_ + ": expected " + std::to_string(in_channels_) +
                          " input channels, got " + std::to_string(x.dim(1)));
  }
  input_shape_ = x.shape();
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  out_h_ = kernels::conv_output_extent(h, kernel_, stride_, padding_);
  out_w_ = kernels::conv_output_extent(w, kernel_, stride_, padding_);
  const std::size_t spatial = out_h_ * out_w_;
  const std::size_t k = in_channels_ * kernel_ * kernel_;

  cols_.resize(n * k * spatial);
  effective_ = quantizer_.apply(weight_, ctx.quantizers);
  const ConstMatrixMap weff(effective_.data(), out_channels_, k);
  Tensor out({n, out_channels_, out_h_, out_w_});
  for (std::size_t img = 0; img < n; ++img) {
    double* cols = cols_.data() + img * k * spatial;
    lower(x.data() + img * in_channels_ * h * w, h, w, cols);
    MatrixMap y(out.data() + img * out_channels_ * spatial, out_channels_, spatial);
    y.noalias() = weff * ConstMatrixMap(cols, k, spatial);
    if (has_bias_) {
      for (std::size_t o = 0; o < out_channels_; ++o) y.row(o).array() += bias_[o];
    }
  }
  return out;
}

void Conv2dLayer::lower(const double* image, std::size_t h, std::size_t w,
                        double* cols) const {
  for (std::size_t c = 0; c < in_channels_; ++c) {
    for (std::size_t dy = 0; dy < kernel_; ++dy) {
      for (std::size_t dx = 0; dx < kernel_; ++dx) {
        double* row = cols + ((c * kernel_ + dy) * kernel_ + dx) * out_h_ * out_w_;
        for (std::size_t y = 0; y < out_h_; ++y) {
          const auto iy = static_cast<std::ptrdiff_t>(y * stride_ + dy) -
                          static_cast<std::ptrdiff_t>(padding_);
          double* dst = row + y * out_w_;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            std::fill_n(dst, out_w_, 0.0);
            continue;
          }
          const double* src = image + (c * h + static_cast<std::size_t>(iy)) * w;
          for (std::size_t x = 0; x < out_w_; ++x) {
            const auto ix = static_cast<std::ptrdiff_t>(x * stride_ + dx) -
                            static_cast<std::ptrdiff_t>(padding_);
            dst[x] = ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)
                         ? 0.0
                         : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

Tensor Conv2dLayer::backward(const Tensor& grad) {
  const std::size_t n = input_shape_[0], h = input_shape_[2], w = input_shape_[3];
  const std::size_t spatial = out_h_ * out_w_;
  const std::size_t k = in_channels_ * kernel_ * kernel_;
  if (grad.size() != n * out_channels_ * spatial) {
    throw InvalidArgument(name_ + ": gradient shape mismatch");
  }
  const ConstMatrixMap weff(effective_.data(), out_channels_, k);
  RowMatrix d_eff = RowMatrix::Zero(out_channels_, k);
  RowMatrix dcols(k, spatial);
  Tensor dx(input_shape_);
  for (std::size_t img = 0; img < n; ++img) {
    const ConstMatrixMap g(grad.data() + img * out_channels_ * spatial, out_channels_,
                           spatial);
    const ConstMatrixMap cols(cols_.data() + img * k * spatial, k, spatial);
    d_eff.noalias() += g * cols.transpose();
    if (has_bias_) {
      for (std::size_t o = 0; o < out_channels_; ++o) bias_grad_[o] += g.row(o).sum();
    }
    dcols.noalias() = weff.transpose() * g;
    double* base = dx.data() + img * in_channels_ * h * w;
    for (std::size_t c = 0; c < in_channels_; ++c) {
      for (std::size_t dy = 0; dy < kernel_; ++dy) {
        for (std::size_t dxk = 0; dxk < kernel_; ++dxk) {
          const double* row = dcols.data() + ((c * kernel_ + dy) * kernel_ + dxk) * spatial;
          for (std::size_t y = 0; y < out_h_; ++y) {
            const auto iy = static_cast<std::ptrdiff_t>(y * stride_ + dy) -
                            static_cast<std::ptrdiff_t>(padding_);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            double* dst = base + (c * h + static_cast<std::size_t>(iy)) * w;
            for (std::size_t x = 0; x < out_w_; ++x) {
              const auto ix = static_cast<std::ptrdiff_t>(x * stride_ + dxk) -
                              static_cast<std::ptrdiff_t>(padding_);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              dst[static_cast<std::size_t>(ix)] += row[y * out_w_ + x];
            }
          }
        }
      }
    }
  }
  Tensor d_eff_t(weight_.shape(), std::vector<double>(d_eff.data(), d_eff.data() + d_eff.size()));
  const Tensor dw = quantizer_.backward(weight_, d_eff_t);
  for (std::size_t i = 0; i < dw.size(); ++i) weight_grad_[i] += dw[i];
  return dx;
}

void Conv2dLayer::collect_params(std::vector<Param>& out) {
  out.push_back({name_ + ".weight", &weight_, &weight_grad_, true});
  if (has_bias_) out.push_back({name_ + ".bias", &bias_, &bias_grad_, false});
}

void Conv2dLayer::collect_state(std::vector<Tensor*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

std::unique_ptr<Layer> Conv2dLayer::clone() const {
  return std::make_unique<Conv2dLayer>(*this);
}

// ---- LinearLayer ------------------------------------------------------------------------

LinearLayer::LinearLayer(const LayerDef& def, std::size_t in_features,
                         std::mt19937_64& rng)
    : name_(def.name),
      in_features_(in_features),
      out_features_(def.out_channels),
      has_bias_(def.bias),
      quantizer_(def.weight.bits) {
  weight_ = uniform_init({out_features_, in_features_}, in_features_, rng);
  weight_grad_ = Tensor(weight_.shape());
  bias_ = Tensor({has_bias_ ? out_features_ : 0});
  bias_grad_ = Tensor(bias_.shape());
}

Tensor LinearLayer::forward(const Tensor& x, const PassContext& ctx) {
  if (x.rank() < 2) throw InvalidArgument(name_ + ": expected batched input");
  const std::size_t n = x.dim(0);
  if (x.size() != n * in_features_) {
    throw InvalidArgument(name_ + ": expected " + std::to_string(in_features_) +
                          " features per sample, got shape " +
                          shape_to_string(x.shape()));
  }
  input_shape_ = x.shape();
  input_ = x;
  effective_ = quantizer_.apply(weight_, ctx.quantizers);
  Tensor out({n, out_features_});
  MatrixMap y(out.data(), n, out_features_);
  y.noalias() = ConstMatrixMap(x.data(), n, in_features_) *
                ConstMatrixMap(effective_.data(), out_features_, in_features_).transpose();
  if (has_bias_) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t o = 0; o < out_features_; ++o) y(i, o) += bias_[o];
    }
  }
  return out;
}

Tensor LinearLayer::backward(const Tensor& grad) {
  const std::size_t n = input_shape_[0];
  if (grad.size() != n * out_features_) {
    throw InvalidArgument(name_ + ": gradient shape mismatch");
  }
  const ConstMatrixMap g(grad.data(), n, out_features_);
  Tensor d_eff(weight_.shape());
  MatrixMap(d_eff.data(), out_features_, in_features_).noalias() =
      g.transpose() * ConstMatrixMap(input_.data(), n, in_features_);
  const Tensor dw = quantizer_.backward(weight_, d_eff);
  for (std::size_t i = 0; i < dw.size(); ++i) weight_grad_[i] += dw[i];
  if (has_bias_) {
    for (std::size_t o = 0; o < out_features_; ++o) bias_grad_[o] += g.col(o).sum();
  }
  Tensor dx(input_shape_);
  MatrixMap(dx.data(), n, in_features_).noalias() =
      g * ConstMatrixMap(effective_.data(), out_features_, in_features_);
  return dx;
}

void LinearLayer::collect_params(std::vector<Param>& out) {
  out.push_back({name_ + ".weight", &weight_, &weight_grad_, true});
  if (has_bias_) out.push_back({name_ + ".bias", &bias_, &bias_grad_, false});
}

void LinearLayer::collect_state(std::vector<Tensor*>& out) {
  out.push_back(&weight_);
  if (has_bias_) out.push_back(&bias_);
}

std::unique_ptr<Layer> LinearLayer::clone() const {
  return std::make_unique<LinearLayer>(*this);
}

// ---- BatchNormLayer ---------------------------------------------------------------------

BatchNormLayer::BatchNormLayer(const LayerDef& def, std::size_t channels)
    : name_(def.name),
      channels_(channels),
      eps_(def.bn_eps),
      momentum_(def.bn_momentum),
      gamma_({channels}, 1.0),
      beta_({channels}, 0.0),
      gamma_grad_({channels}),
      beta_grad_({channels}),
      running_mean_({channels}, 0.0),
      running_var_({channels}, 1.0) {}

Tensor BatchNormLayer::forward(const Tensor& x, const PassContext& ctx) {
  if (x.rank() < 2 || x.dim(1) != channels_) {
    throw InvalidArgument(name_ + ": expected " + std::to_string(channels_) +
                          " channels, got shape " + shape_to_string(x.shape()));
  }
  input_shape_ = x.shape();
  const std::size_t n = x.dim(0);
  const std::size_t spatial = x.size() / (n * channels_);
  const double count = static_cast<double>(n * spatial);
  used_batch_stats_ = ctx.batch_stats;
  normalized_ = Tensor(x.shape());
  inv_std_.assign(channels_, 0.0);
  Tensor out(x.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    double mean = running_mean_[c], var = running_var_[c];
    if (used_batch_stats_) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.data() + (i * channels_ + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) sum += p[s];
      }
      mean = sum / count;
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = x.data() + (i * channels_ + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) sq += (p[s] - mean) * (p[s] - mean);
      }
      var = sq / count;
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean_[c] = momentum_ * running_mean_[c] + (1 - momentum_) * mean;
      running_var_[c] = momentum_ * running_var_[c] + (1 - momentum_) * unbiased;
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * channels_ + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        const double xh = (x[off + s] - mean) * inv;
        normalized_[off + s] = xh;
        out[off + s] = gamma_[c] * xh + beta_[c];
      }
    }
  }
  return out;
}

Tensor BatchNormLayer::backward(const Tensor& grad) {
  const std::size_t n = input_shape_[0];
  const std::size_t spatial = grad.size() / (n * channels_);
  const double count = static_cast<double>(n * spatial);
  Tensor dx(input_shape_);
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * channels_ + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        sum_g += grad[off + s];
        sum_gx += grad[off + s] * normalized_[off + s];
      }
    }
    gamma_grad_[c] += sum_gx;
    beta_grad_[c] += sum_g;
    const double scale = gamma_[c] * inv_std_[c];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * channels_ + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        if (used_batch_stats_) {
          dx[off + s] = scale / count *
                        (count * grad[off + s] - sum_g - normalized_[off + s] * sum_gx);
        } else {
          dx[off + s] = scale * grad[off + s];
        }
      }
    }
  }
  return dx;
}

void BatchNormLayer::collect_params(std::vector<Param>& out) {
  out.push_back({name_ + ".gamma", &gamma_, &gamma_grad_, false});
  out.push_back({name_ + ".beta", &beta_, &beta_grad_, false});
}

void BatchNormLayer::collect_state(std::vector<Tensor*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

std::unique_ptr<Layer> BatchNormLayer::clone() const {
  return std::make_unique<BatchNormLayer>(*this);
}

// ---- ClampActLayer ----------------------------------------------------------------------

ClampActLayer::ClampActLayer(const LayerDef& def)
    : name_(def.name), bits_(def.activation.bits) {}

Tensor ClampActLayer::forward(const Tensor& x, const PassContext& ctx) {
  input_ = x;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i], 0.0, 1.0);
  if (bits_ == kFullPrecisionBits) return out;
  if (ctx.quantizers == QuantizerMode::FrozenSurrogate) {
    if (offset_.shape() != x.shape()) {
      throw InvalidState(name_ + ": no recorded offsets to freeze");
    }
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += offset_[i];
    return out;
  }
  const double steps = static_cast<double>(levels(bits_));
  Tensor q(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    q[i] = static_cast<double>(round_half_away(steps * out[i])) / steps;
  }
  if (ctx.quantizers == QuantizerMode::RecordOffsets) {
    offset_ = Tensor(x.shape());
    for (std::size_t i = 0; i < q.size(); ++i) offset_[i] = q[i] - out[i];
  }
  return q;
}

Tensor ClampActLayer::backward(const Tensor& grad) {
  if (grad.size() != input_.size()) {
    throw InvalidArgument(name_ + ": gradient shape mismatch");
  }
  Tensor out(input_.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = input_[i] >= 0.0 && input_[i] <= 1.0 ? grad[i] : 0.0;
  }
  return out;
}

std::unique_ptr<Layer> ClampActLayer::clone() const {
  return std::make_unique<ClampActLayer>(*this);
}

// ---- PoolLayer -----------------------------------------------------------------------------

PoolLayer::PoolLayer(const LayerDef& def)
    : name_(def.name),
      max_(def.kind == LayerKind::MaxPool),
      kernel_(def.kernel),
      stride_(def.stride) {}

Tensor PoolLayer::forward(const Tensor& x, const PassContext&) {
  require_rank(x, 4, name_);
  input_shape_ = x.shape();
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = kernels::conv_output_extent(h, kernel_, stride_, 0);
  const std::size_t ow = kernels::conv_output_extent(w, kernel_, stride_, 0);
  Tensor out({n, c, oh, ow});
  if (max_) argmax_.assign(out.size(), 0);
  const double inv_area = 1.0 / static_cast<double>(kernel_ * kernel_);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const double* src = x.data() + plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const std::size_t o = (plane * oh + y) * ow + xo;
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        double sum = 0.0;
        for (std::size_t dy = 0; dy < kernel_; ++dy) {
          for (std::size_t dx = 0; dx < kernel_; ++dx) {
            const std::size_t i = (y * stride_ + dy) * w + xo * stride_ + dx;
            sum += src[i];
            if (src[i] > best) {
              best = src[i];
              best_i = i;
            }
          }
        }
        if (max_) {
          out[o] = best;
          argmax_[o] = plane * h * w + best_i;
        } else {
          out[o] = sum * inv_area;
        }
      }
    }
  }
  return out;
}

Tensor PoolLayer::backward(const Tensor& grad) {
  Tensor dx(input_shape_);
  const std::size_t h = input_shape_[2], w = input_shape_[3];
  const std::size_t n = input_shape_[0], c = input_shape_[1];
  const std::size_t oh = (h - kernel_) / stride_ + 1;
  const std::size_t ow = (w - kernel_) / stride_ + 1;
  if (grad.size() != n * c * oh * ow) {
    throw InvalidArgument(name_ + ": gradient shape mismatch");
  }
  if (max_) {
    for (std::size_t o = 0; o < grad.size(); ++o) dx[argmax_[o]] += grad[o];
    return dx;
  }
  const double inv_area = 1.0 / static_cast<double>(kernel_ * kernel_);
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    double* dst = dx.data() + plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const double g = grad[(plane * oh + y) * ow + xo] * inv_area;
        for (std::size_t dy = 0; dy < kernel_; ++dy) {
          for (std::size_t dxk = 0; dxk < kernel_; ++dxk) {
            dst[(y * stride_ + dy) * w + xo * stride_ + dxk] += g;
          }
        }
      }
    }
  }
  return dx;
}

std::unique_ptr<Layer> PoolLayer::clone() const {
  return std::make_unique<PoolLayer>(*this);
}

// ---- ResidualLayer ------------------------------------------------------------------------

ResidualLayer::ResidualLayer(const LayerDef& def, const Shape& input,
                             std::mt19937_64& rng)
    : name_(def.name) {
  Shape branch_shape = input;
  branch_ = build_layers(def.branch, branch_shape, rng);
  Shape shortcut_shape = input;
  shortcut_ = build_layers(def.shortcut, shortcut_shape, rng);
  if (branch_shape != shortcut_shape) {
    throw InvalidArgument(name_ + ": branch output " +
                          shape_to_string(branch_shape) +
                          " does not match shortcut output " +
                          shape_to_string(shortcut_shape));
  }
}

ResidualLayer::ResidualLayer(const ResidualLayer& other) : name_(other.name_) {
  for (const auto& l : other.branch_) branch_.push_back(l->clone());
  for (const auto& l : other.shortcut_) shortcut_.push_back(l->clone());
}

Tensor ResidualLayer::forward(const Tensor& x, const PassContext& ctx) {
  Tensor y = x;
  for (auto& l : branch_) y = l->forward(y, ctx);
  Tensor s = x;
  for (auto& l : shortcut_) s = l->forward(s, ctx);
  if (y.size() != s.size()) {
    throw InvalidArgument(name_ + ": branch and shortcut sizes differ");
  }
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += s[i];
  return y;
}

Tensor ResidualLayer::backward(const Tensor& grad) {
  Tensor gb = grad;
  for (auto it = branch_.rbegin(); it != branch_.rend(); ++it) gb = (*it)->backward(gb);
  Tensor gs = grad;
  for (auto it = shortcut_.rbegin(); it != shortcut_.rend(); ++it) gs = (*it)->backward(gs);
  for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gs[i];
  return gb;
}

void ResidualLayer::collect_params(std::vector<Param>& out) {
  for (auto& l : branch_) l->collect_params(out);
  for (auto& l : shortcut_) l->collect_params(out);
}

void ResidualLayer::collect_state(std::vector<Tensor*>& out) {
  for (auto& l : branch_) l->collect_state(out);
  for (auto& l : shortcut_) l->collect_state(out);
}

std::unique_ptr<Layer> ResidualLayer::clone() const {
  return std::make_unique<ResidualLayer>(*this);
}

// ---- construction ----------------------------------------------------------------------------

Shape infer_shape(const LayerDef& def, const Shape& in) {
  auto need_image = [&] {
    if (in.size() != 3) {
      throw InvalidArgument(def.name + ": needs a C x H x W input, got " +
                            shape_to_string(in));
    }
  };
  switch (def.kind) {
    case LayerKind::Conv2d: {
      need_image();
      if (def.out_channels == 0) throw InvalidArgument(def.name + ": zero filters");
      return {def.out_channels,
              kernels::conv_output_extent(in[1], def.kernel, def.stride, def.padding),
              kernels::conv_output_extent(in[2], def.kernel, def.stride, def.padding)};
    }
    case LayerKind::Linear:
      if (in.empty()) throw InvalidArgument(def.name + ": unknown input size");
      if (def.out_channels == 0) throw InvalidArgument(def.name + ": zero outputs");
      return {def.out_channels};
    case LayerKind::BatchNorm:
    case LayerKind::ClampAct:
      if (in.empty()) throw InvalidArgument(def.name + ": unknown input size");
      return in;
    case LayerKind::MaxPool:
    case LayerKind::AvgPool:
      need_image();
      return {in[0], kernels::conv_output_extent(in[1], def.kernel, def.stride, 0),
              kernels::conv_output_extent(in[2], def.kernel, def.stride, 0)};
    case LayerKind::Residual: {
      Shape b = in;
      for (const auto& l : def.branch) b = infer_shape(l, b);
      Shape s = in;
      for (const auto& l : def.shortcut) s = infer_shape(l, s);
      if (b != s) {
        throw InvalidArgument(def.name + ": branch output " + shape_to_string(b) +
                              " does not match shortcut output " +
                              shape_to_string(s));
      }
      return b;
    }
    case LayerKind::Params:
      return in;
  }
  return in;
}

std::vector<std::unique_ptr<Layer>> build_layers(const std::vector<LayerDef>& defs,
                                                 Shape& shape,
                                                 std::mt19937_64& rng) {
  std::vector<std::unique_ptr<Layer>> out;
  for (const auto& def : defs) {
    const Shape next = infer_shape(def, shape);
    switch (def.kind) {
      case LayerKind::Conv2d:
        out.push_back(std::make_unique<Conv2dLayer>(def, shape[0], rng));
        break;
      case LayerKind::Linear:
        out.push_back(std::make_unique<LinearLayer>(def, features_of(shape), rng));
        break;
      case LayerKind::BatchNorm:
        out.push_back(std::make_unique<BatchNormLayer>(def, shape[0]));
        break;
      case LayerKind::ClampAct:
        out.push_back(std::make_unique<ClampActLayer>(def));
        break;
      case LayerKind::MaxPool:
      case LayerKind::AvgPool:
        out.push_back(std::make_unique<PoolLayer>(def));
        break;
      case LayerKind::Residual:
        out.push_back(std::make_unique<ResidualLayer>(def, shape, rng));
        break;
      case LayerKind::Params:
        throw InvalidArgument(def.name +
                              ": parameter-count entries cannot be instantiated");
    }
    shape = next;
  }
  return out;
}

}  // namespace qbit
