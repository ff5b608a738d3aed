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
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qbit/tensor.hpp"

namespace qbit {

enum class DatasetKind { MnistIdx, Cifar10Binary };

const char* to_string(DatasetKind k);
DatasetKind parse_dataset_kind(const std::string& text);

enum class Split { Train, Test };

// Raw 8-bit images (N x C x H x W) plus labels.
struct Dataset {
  Shape sample_shape;
  std::size_t classes = 10;
  std::vector<std::uint8_t> pixels;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t sample_size() const { return shape_size(sample_shape); }
};

// IDX files: {train,t10k}-{images-idx3,labels-idx1}-ubyte (the '.' spelling
// "train-images.idx3-ubyte" is accepted too).
Dataset load_mnist(const std::filesystem::path& dir, Split split);
// CIFAR-10 binary batches: data_batch_{1..5}.bin / test_batch.bin, each a
// sequence of 3073-byte records. `dir` may be the parent of
// cifar-10-batches-bin.
Dataset load_cifar10(const std::filesystem::path& dir, Split split);
Dataset load_dataset(DatasetKind kind, const std::filesystem::path& dir, Split split);
// Throws DatasetError if neither layout is present.
DatasetKind detect_dataset_kind(const std::filesystem::path& dir);

// Resolves a dataset directory: `dir` if given and existing, otherwise
// $QBIT_DATA_DIR (joined with `dir` when relative).
std::filesystem::path resolve_data_dir(const std::string& dir);

Dataset subset(const Dataset& d, std::size_t begin, std::size_t end);
// Last 1/denominator of `d` becomes the validation part.
std::pair<Dataset, Dataset> split_validation(const Dataset& d, std::size_t denominator = 10);

// Per-channel constants on the [0, 1] pixel scale.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> std;
  friend bool operator==(const Normalization&, const Normalization&) = default;
};

struct Augmentation {
  std::size_t pad = 0;  // zero-pad then random crop back to H x W
  bool flip = false;    // random horizontal flip
  bool enabled() const { return pad > 0 || flip; }
};

// Normalized batch [indices.size() x C x H x W]; augmentation draws from rng.
Tensor make_batch(const Dataset& d, std::span<const std::size_t> indices,
                  const Normalization& norm, std::vector<int>& labels,
                  const Augmentation& aug = {}, std::mt19937_64* rng = nullptr);

}  // namespace qbit
