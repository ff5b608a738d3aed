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

#include "qbit/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>

#include "qbit/error.hpp"

namespace qbit {
namespace fs = std::filesystem;
namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::size_t kCifarRecord = 3073;

std::vector<std::uint8_t> read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off,
                        const fs::path& p) {
  if (off + 4 > b.size()) {
    throw DatasetError(p.string() + ": truncated header at byte " + std::to_string(off),
                       static_cast<std::ptrdiff_t>(off));
  }
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void expect_magic(const std::vector<std::uint8_t>& b, std::uint32_t magic,
                  const fs::path& p) {
  const std::uint32_t got = read_be32(b, 0, p);
  if (got != magic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad magic 0x%08x (expected 0x%08x) at byte 0", got,
                  magic);
    throw DatasetError(p.string() + ": " + buf, 0);
  }
}

fs::path find_first(const fs::path& dir, std::initializer_list<const char*> names) {
  for (const char* n : names) {
    if (fs::exists(dir / n)) return dir / n;
  }
  throw DatasetError("no " + std::string(*names.begin()) + " in " + dir.string());
}

void check_label(int label, std::size_t classes, std::size_t offset, const fs::path& p) {
  if (label < 0 || static_cast<std::size_t>(label) >= classes) {
    throw DatasetError(p.string() + ": label " + std::to_string(label) +
                           " out of range at byte " + std::to_string(offset),
                       static_cast<std::ptrdiff_t>(offset));
  }
}

fs::path cifar_root(const fs::path& dir) {
  if (fs::exists(dir / "cifar-10-batches-bin")) return dir / "cifar-10-batches-bin";
  return dir;
}

}  // namespace

const char* to_string(DatasetKind k) {
  return k == DatasetKind::MnistIdx ? "mnist" : "cifar10";
}

DatasetKind parse_dataset_kind(const std::string& text) {
  if (text == "mnist" || text == "mnist-idx") return DatasetKind::MnistIdx;
  if (text == "cifar10" || text == "cifar10-binary") return DatasetKind::Cifar10Binary;
  throw InvalidArgument("unknown dataset kind '" + text + "'");
}

Dataset load_mnist(const fs::path& dir, Split split) {
  const bool train = split == Split::Train;
  const fs::path img_path =
      train ? find_first(dir, {"train-images-idx3-ubyte", "train-images.idx3-ubyte"})
            : find_first(dir, {"t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"});
  const fs::path lbl_path =
      train ? find_first(dir, {"train-labels-idx1-ubyte", "train-labels.idx1-ubyte"})
            : find_first(dir, {"t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"});
  const auto img = read_file(img_path);
  const auto lbl = read_file(lbl_path);
  expect_magic(img, kIdxImages, img_path);
  expect_magic(lbl, kIdxLabels, lbl_path);
  const std::size_t n = read_be32(img, 4, img_path);
  const std::size_t rows = read_be32(img, 8, img_path);
  const std::size_t cols = read_be32(img, 12, img_path);
  const std::size_t n_labels = read_be32(lbl, 4, lbl_path);
  if (n != n_labels) {
    throw DatasetError(lbl_path.string() + ": " + std::to_string(n_labels) +
                           " labels for " + std::to_string(n) + " images at byte 4",
                       4);
  }
  if (img.size() < 16 + n * rows * cols) {
    throw DatasetError(img_path.string() + ": truncated at byte " +
                           std::to_string(img.size()),
                       static_cast<std::ptrdiff_t>(img.size()));
  }
  if (lbl.size() < 8 + n) {
    throw DatasetError(lbl_path.string() + ": truncated at byte " +
                           std::to_string(lbl.size()),
                       static_cast<std::ptrdiff_t>(lbl.size()));
  }
  Dataset d;
  d.sample_shape = {1, rows, cols};
  d.pixels.assign(img.begin() + 16, img.begin() + 16 + static_cast<std::ptrdiff_t>(n * rows * cols));
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = lbl[8 + i];
    check_label(d.labels[i], d.classes, 8 + i, lbl_path);
  }
  return d;
}

Dataset load_cifar10(const fs::path& dir, Split split) {
  const fs::path root = cifar_root(dir);
  std::vector<fs::path> files;
  if (split == Split::Train) {
    for (int i = 1; i <= 5; ++i) files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
  } else {
    files.push_back(root / "test_batch.bin");
  }
  Dataset d;
  d.sample_shape = {3, 32, 32};
  for (const auto& f : files) {
    const auto bytes = read_file(f);
    if (bytes.size() % kCifarRecord != 0) {
      const std::size_t off = bytes.size() - bytes.size() % kCifarRecord;
      throw DatasetError(f.string() + ": truncated record at byte " + std::to_string(off),
                         static_cast<std::ptrdiff_t>(off));
    }
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
      d.labels.push_back(bytes[off]);
      check_label(d.labels.back(), d.classes, off, f);
      d.pixels.insert(d.pixels.end(), bytes.begin() + static_cast<std::ptrdiff_t>(off + 1),
                      bytes.begin() + static_cast<std::ptrdiff_t>(off + kCifarRecord));
    }
  }
  return d;
}

Dataset load_dataset(DatasetKind kind, const fs::path& dir, Split split) {
  return kind == DatasetKind::MnistIdx ? load_mnist(dir, split) : load_cifar10(dir, split);
}

DatasetKind detect_dataset_kind(const fs::path& dir) {
  if (fs::exists(dir / "train-images-idx3-ubyte") || fs::exists(dir / "t10k-images-idx3-ubyte") ||
      fs::exists(dir / "train-images.idx3-ubyte") || fs::exists(dir / "t10k-images.idx3-ubyte")) {
    return DatasetKind::MnistIdx;
  }
  const fs::path root = cifar_root(dir);
  if (fs::exists(root / "test_batch.bin") || fs::exists(root / "data_batch_1.bin")) {
    return DatasetKind::Cifar10Binary;
  }
  throw DatasetError("no MNIST or CIFAR-10 files in " + dir.string());
}

fs::path resolve_data_dir(const std::string& dir) {
  if (!dir.empty() && fs::is_directory(dir)) return dir;
  const char* env = std::getenv("QBIT_DATA_DIR");
  if (env != nullptr && *env != '\0') {
    const fs::path root(env);
    if (dir.empty()) return root;
    const fs::path p(dir);
    if (p.is_relative() && fs::is_directory(root / p)) return root / p;
  }
  throw DatasetError("dataset directory '" + dir + "' not found" +
                     (env ? "" : " (QBIT_DATA_DIR unset)"));
}

Dataset subset(const Dataset& d, std::size_t begin, std::size_t end) {
  if (begin > end || end > d.size()) throw InvalidArgument("subset range out of bounds");
  Dataset out;
  out.sample_shape = d.sample_shape;
  out.classes = d.classes;
  const std::size_t s = d.sample_size();
  out.pixels.assign(d.pixels.begin() + static_cast<std::ptrdiff_t>(begin * s),
                    d.pixels.begin() + static_cast<std::ptrdiff_t>(end * s));
  out.labels.assign(d.labels.begin() + static_cast<std::ptrdiff_t>(begin),
                    d.labels.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}

std::pair<Dataset, Dataset> split_validation(const Dataset& d, std::size_t denominator) {
  if (denominator == 0) throw InvalidArgument("validation denominator must be positive");
  const std::size_t val = d.size() / denominator;
  return {subset(d, 0, d.size() - val), subset(d, d.size() - val, d.size())};
}

Tensor make_batch(const Dataset& d, std::span<const std::size_t> indices,
                  const Normalization& norm, std::vector<int>& labels,
                  const Augmentation& aug, std::mt19937_64* rng) {
  const std::size_t c = d.sample_shape.at(0), h = d.sample_shape.at(1),
                    w = d.sample_shape.at(2);
  if (norm.mean.size() != c || norm.std.size() != c) {
    throw InvalidArgument("normalization needs " + std::to_string(c) + " channels");
  }
  if (aug.enabled() && rng == nullptr) throw InvalidArgument("augmentation needs an rng");
  Shape shape{indices.size(), c, h, w};
  Tensor out(shape);
  labels.resize(indices.size());
  const std::size_t s = d.sample_size();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t idx = indices[b];
    if (idx >= d.size()) throw RangeViolation("sample index out of range");
    labels[b] = d.labels[idx];
    std::ptrdiff_t oy = 0, ox = 0;
    bool flip = false;
    if (aug.pad > 0) {
      std::uniform_int_distribution<std::ptrdiff_t> shift(
          -static_cast<std::ptrdiff_t>(aug.pad), static_cast<std::ptrdiff_t>(aug.pad));
      oy = shift(*rng);
      ox = shift(*rng);
    }
    if (aug.flip) flip = std::uniform_int_distribution<int>(0, 1)(*rng) == 1;
    const std::uint8_t* src = d.pixels.data() + idx * s;
    double* dst = out.data() + b * s;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double inv = 1.0 / norm.std[ch];
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) + oy;
          std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(flip ? w - 1 - x : x) + ox;
          double v = 0.0;
          if (sy >= 0 && sy < static_cast<std::ptrdiff_t>(h) && sx >= 0 &&
              sx < static_cast<std::ptrdiff_t>(w)) {
            const double p = src[(ch * h + static_cast<std::size_t>(sy)) * w +
                                 static_cast<std::size_t>(sx)] / 255.0;
            v = (p - norm.mean[ch]) * inv;
          }
          dst[(ch * h + y) * w + x] = v;
        }
      }
    }
  }
  return out;
}

}  // namespace qbit
