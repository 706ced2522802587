// grdn/data.hpp

// Copyright 2026  The grdn authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "grdn/network.hpp"

namespace grdn {

struct DatasetMeta {
  std::string name;
  int dim = 0;
  int num_classes = 0;
  std::string split_tag;
};

/// Immutable after load; inputs are scaled to [0,1].
struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  DatasetMeta meta;

  std::size_t size() const { return inputs.rows; }
  SampleBatch batch(const std::vector<std::size_t> &idx) const;
  SampleBatch all() const;
};

/// IDX pair: big-endian magic 0x00000803 for images (u32 count, rows, cols,
/// u8 pixels) and 0x00000801 for labels (u32 count, u8 labels). Pixels are
/// divided by 255. Throws ParseError with a byte offset on malformed input.
Dataset load_idx(const std::string &images_path, const std::string &labels_path);

/// Inverse of load_idx for valid datasets: pixels quantized by round(v*255),
/// so load -> write reproduces the original files byte for byte.
void write_idx(const Dataset &ds, const std::string &images_path,
               const std::string &labels_path, std::size_t rows = 0,
               std::size_t cols = 0);

/// Deterministic shuffled split into two disjoint halves whose union is the
/// input. The first half gets ceil(n/2) samples.
std::pair<Dataset, Dataset> split_half(const Dataset &ds, std::uint64_t seed);

/// Gaussian class blobs clipped to [0,1]. Class means sit on orthonormal
/// directions around 0.5 with pairwise distance separation * sigma
/// (sigma = 0.05), so separation 0 makes the classes indistinguishable.
/// Requires dim >= num_classes. The class structure comes from `seed` alone;
/// sample_seed (0 = derive from seed) draws the noise, so train and test
/// splits of the same task share their class means.
Dataset synth_blobs(int num_classes, int dim, int per_class, double separation,
                    std::uint64_t seed, std::uint64_t sample_seed = 0);

/// Mixture of Bernoulli modes over {0,1}^dim; label is the mode id. Each
/// mode's prototype turns every coordinate on with probability 0.9 or 0.1.
/// Prototypes come from `seed`; sample_seed (0 = derive) draws the samples.
Dataset synth_binary(int modes, int dim, int count, std::uint64_t seed,
                     std::uint64_t sample_seed = 0);

/// Thresholded copy: inputs become exactly 0.0 or 1.0.
Dataset binarize(const Dataset &ds, double threshold);

/// Deterministic subsample of `count` elements (shuffled by seed). Returns
/// the dataset unchanged when count is 0 or >= size.
Dataset subsample(const Dataset &ds, std::size_t count, std::uint64_t seed);

}  // namespace grdn
