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

#include "qbit/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "qbit/error.hpp"

namespace qbit {
namespace {

constexpr char kModelMagic[4] = {'Q', 'B', 'M', '1'};
constexpr char kCheckpointMagic[4] = {'Q', 'B', 'C', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kMaxDepth = 64;

class Writer {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void shape(const Shape& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    for (auto d : s) u64(d);
  }
  void doubles(const std::vector<double>& v) {
    u64(v.size());
    for (double d : v) f64(d);
  }
  void tensor(const Tensor& t) {
    shape(t.shape());
    for (double d : t.values()) f64(d);
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  [[noreturn]] void fail(const std::string& why) const {
    throw FormatError(why + " at byte " + std::to_string(pos_));
  }
  void need(std::size_t n) const {
    if (n > b_.size() - pos_) fail("truncated input");
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b_[pos_ + i]} << (8 * i);
    pos_ += 4;
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{b_[pos_ + i]} << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  // Element count bounded by what the remaining input could hold.
  std::size_t count(std::size_t elem_bytes) {
    const std::uint64_t n = u64();
    if (elem_bytes > 0 && n > (b_.size() - pos_) / elem_bytes) fail("implausible length");
    return static_cast<std::size_t>(n);
  }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  Shape shape() {
    const std::uint32_t rank = u32();
    if (rank > 8) fail("tensor rank " + std::to_string(rank) + " too large");
    Shape s(rank);
    std::size_t total = 1;
    for (auto& d : s) {
      d = static_cast<std::size_t>(u64());
      if (d != 0 && total > (std::size_t{1} << 40) / d) fail("implausible tensor shape");
      total *= d;
    }
    return s;
  }
  std::vector<double> doubles() {
    const std::size_t n = count(8);
    std::vector<double> v(n);
    for (auto& d : v) d = f64();
    return v;
  }
  Tensor tensor() {
    Shape s = shape();
    const std::size_t n = shape_size(s);
    need(n * 8);
    std::vector<double> v(n);
    for (auto& d : v) d = f64();
    return Tensor(std::move(s), std::move(v));
  }
  void magic(const char (&m)[4], const char* what) {
    need(4);
    if (std::memcmp(b_.data() + pos_, m, 4) != 0) fail(std::string("not a ") + what + " file");
    pos_ += 4;
  }
  void finish() const {
    if (pos_ != b_.size()) fail("trailing data");
  }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

LayerKind read_kind(Reader& r) {
  const std::uint8_t k = r.u8();
  if (k > static_cast<std::uint8_t>(LayerKind::Params)) {
    r.fail("unknown layer kind " + std::to_string(k));
  }
  return static_cast<LayerKind>(k);
}

int read_bits(Reader& r) {
  const std::int32_t b = r.i32();
  if (!valid_bitwidth(b)) r.fail("invalid bitwidth " + std::to_string(b));
  return b;
}

void write_normalization(Writer& w, const Normalization& n) {
  w.doubles(n.mean);
  w.doubles(n.std);
}

Normalization read_normalization(Reader& r) {
  Normalization n;
  n.mean = r.doubles();
  n.std = r.doubles();
  if (n.mean.size() != n.std.size()) r.fail("normalization mean/std length mismatch");
  return n;
}

// ---- model -------------------------------------------------------------------------------

void write_topology(Writer& w, const std::vector<DeployOp>& ops) {
  w.u32(static_cast<std::uint32_t>(ops.size()));
  for (const auto& op : ops) {
    w.u8(static_cast<std::uint8_t>(op.kind));
    w.str(op.name);
    w.u64(op.in_features);
    w.u64(op.out_features);
    w.u64(op.kernel);
    w.u64(op.stride);
    w.u64(op.padding);
    w.i32(op.bits);
    write_topology(w, op.branch);
    write_topology(w, op.shortcut);
  }
}

std::vector<DeployOp> read_topology(Reader& r, std::uint32_t depth) {
  if (depth > kMaxDepth) r.fail("topology nested too deeply");
  const std::uint32_t n = r.u32();
  std::vector<DeployOp> ops;
  for (std::uint32_t i = 0; i < n; ++i) {
    DeployOp op;
    op.kind = read_kind(r);
    if (op.kind == LayerKind::Params) r.fail("parameter-count entry in a model");
    op.name = r.str();
    op.in_features = r.u64();
    op.out_features = r.u64();
    op.kernel = r.u64();
    op.stride = r.u64();
    op.padding = r.u64();
    op.bits = read_bits(r);
    op.branch = read_topology(r, depth + 1);
    op.shortcut = read_topology(r, depth + 1);
    if (op.kind != LayerKind::Residual && !(op.branch.empty() && op.shortcut.empty())) {
      r.fail(op.name + ": only residual ops have sub-graphs");
    }
    ops.push_back(std::move(op));
  }
  return ops;
}

template <typename Fn>
void for_each_record(std::vector<DeployOp>& ops, Fn&& fn) {
  for (auto& op : ops) {
    if (op.has_weights() || op.kind == LayerKind::BatchNorm) fn(op);
    for_each_record(op.branch, fn);
    for_each_record(op.shortcut, fn);
  }
}

template <typename Fn>
void for_each_record(const std::vector<DeployOp>& ops, Fn&& fn) {
  for (const auto& op : ops) {
    if (op.has_weights() || op.kind == LayerKind::BatchNorm) fn(op);
    for_each_record(op.branch, fn);
    for_each_record(op.shortcut, fn);
  }
}

void write_record(Writer& w, const DeployOp& op) {
  w.i32(op.k_w);
  w.i32(op.k_in);
  w.doubles(op.mult);
  w.doubles(op.add);
  if (!op.has_weights()) return;
  if (op.quantized()) {
    w.u8(static_cast<std::uint8_t>(op.weights.signedness));
    w.shape(op.weights.shape);
    w.doubles(op.weights.scales);
    w.u64(op.weights.payload.size());
    w.raw(op.weights.payload.data(), op.weights.payload.size());
  } else {
    w.tensor(op.real_weights);
  }
}

void read_record(Reader& r, DeployOp& op) {
  op.k_w = read_bits(r);
  op.k_in = read_bits(r);
  op.mult = r.doubles();
  op.add = r.doubles();
  if (op.mult.size() != op.out_features || op.add.size() != op.out_features) {
    r.fail(op.name + ": affine length does not match " + std::to_string(op.out_features) +
           " channels");
  }
  if (!op.has_weights()) return;
  Shape expect = op.kind == LayerKind::Conv2d
                     ? Shape{op.out_features, op.in_features, op.kernel, op.kernel}
                     : Shape{op.out_features, op.in_features};
  if (op.quantized()) {
    PackedTensor& p = op.weights;
    const std::uint8_t s = r.u8();
    if (s > static_cast<std::uint8_t>(Signedness::Binary)) r.fail("unknown signedness");
    p.signedness = static_cast<Signedness>(s);
    p.bits = op.k_w;
    p.shape = r.shape();
    p.scales = r.doubles();
    const std::size_t n = r.count(1);
    r.need(n);
    p.payload.resize(n);
    for (auto& b : p.payload) b = r.u8();
    if (p.shape != expect) r.fail(op.name + ": weight shape mismatch");
    if (n != packed_bytes(p.element_count(), p.bits)) r.fail(op.name + ": payload size mismatch");
    try {
      unpack(p).validate();
    } catch (const std::exception& e) {
      r.fail(op.name + ": " + e.what());
    }
  } else {
    op.real_weights = r.tensor();
    if (op.real_weights.shape() != expect) r.fail(op.name + ": weight shape mismatch");
  }
}

// ---- network description -----------------------------------------------------------------

void write_defs(Writer& w, const std::vector<LayerDef>& layers) {
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    w.str(l.name);
    w.str(l.group);
    w.u64(l.out_channels);
    w.u64(l.kernel);
    w.u64(l.stride);
    w.u64(l.padding);
    w.u8(static_cast<std::uint8_t>(l.bias | (l.output << 1) | (l.fixed << 2)));
    w.i32(l.weight.bits);
    w.i32(l.activation.bits);
    w.f64(l.bn_eps);
    w.f64(l.bn_momentum);
    w.i64(l.param_count);
    w.u8(static_cast<std::uint8_t>(l.section));
    write_defs(w, l.branch);
    write_defs(w, l.shortcut);
  }
}

std::vector<LayerDef> read_defs(Reader& r, std::uint32_t depth) {
  if (depth > kMaxDepth) r.fail("layer list nested too deeply");
  const std::uint32_t n = r.u32();
  std::vector<LayerDef> out;
  for (std::uint32_t i = 0; i < n; ++i) {
    LayerDef l;
    l.kind = read_kind(r);
    l.name = r.str();
    l.group = r.str();
    l.out_channels = r.u64();
    l.kernel = r.u64();
    l.stride = r.u64();
    l.padding = r.u64();
    const std::uint8_t flags = r.u8();
    l.bias = flags & 1;
    l.output = flags & 2;
    l.fixed = flags & 4;
    l.weight = QuantSpec(read_bits(r), Role::Weight);
    l.activation = QuantSpec(read_bits(r), Role::Activation);
    l.bn_eps = r.f64();
    l.bn_momentum = r.f64();
    l.param_count = r.i64();
    const std::uint8_t sec = r.u8();
    if (sec > 1) r.fail("unknown layer section");
    l.section = static_cast<LayerSection>(sec);
    l.branch = read_defs(r, depth + 1);
    l.shortcut = read_defs(r, depth + 1);
    out.push_back(std::move(l));
  }
  return out;
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_all(const std::filesystem::path& path, const std::vector<std::uint8_t>& b) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

}  // namespace

std::vector<std::uint8_t> encode_model(const PackedModel& m) {
  Writer w;
  w.raw(kModelMagic, 4);
  w.u32(kModelVersion);
  w.shape(m.input);
  w.u64(m.classes);
  write_normalization(w, m.normalization);
  write_topology(w, m.ops);
  for_each_record(m.ops, [&](const DeployOp& op) { write_record(w, op); });
  return w.take();
}

PackedModel decode_model(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic(kModelMagic, "QBM1 model");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) r.fail("unsupported model version " + std::to_string(version));
  PackedModel m;
  m.input = r.shape();
  m.classes = r.u64();
  m.normalization = read_normalization(r);
  m.ops = read_topology(r, 0);
  for_each_record(m.ops, [&](DeployOp& op) { read_record(r, op); });
  r.finish();
  return m;
}

void save_model(const PackedModel& m, const std::filesystem::path& path) {
  write_all(path, encode_model(m));
}

PackedModel load_model(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  try {
    return decode_model(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  Writer w;
  w.raw(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.shape(c.def.input);
  w.u64(c.def.classes);
  w.u8(c.def.quantize_first_activation ? 1 : 0);
  write_defs(w, c.def.layers);
  write_normalization(w, c.normalization);
  w.u64(c.state.size());
  for (const auto& t : c.state) w.tensor(t);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.magic(kCheckpointMagic, "QBC1 checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.def.input = r.shape();
  c.def.classes = r.u64();
  c.def.quantize_first_activation = r.u8() != 0;
  c.def.layers = read_defs(r, 0);
  c.normalization = read_normalization(r);
  const std::size_t n = r.count(4);
  for (std::size_t i = 0; i < n; ++i) c.state.push_back(r.tensor());
  r.finish();
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_all(path, encode_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const auto bytes = read_all(path);
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  } catch (const InvalidArgument& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string file_magic(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  char m[4];
  if (!in.read(m, 4)) return {};
  return std::string(m, 4);
}

}  // namespace qbit
