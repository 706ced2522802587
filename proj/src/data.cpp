// grdn/data.cpp

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

#include "grdn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "grdn/errors.hpp"
#include "grdn/rng.hpp"

namespace grdn {

SampleBatch Dataset::batch(const std::vector<std::size_t> &idx) const {
  SampleBatch b;
  b.inputs = Matrix(idx.size(), inputs.cols);
  b.labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(inputs.row(idx[i]), inputs.row(idx[i]) + inputs.cols, b.inputs.row(i));
    b.labels[i] = labels[idx[i]];
  }
  return b;
}

SampleBatch Dataset::all() const {
  SampleBatch b;
  b.inputs = inputs;
  b.labels = labels;
  return b;
}

static std::vector<std::uint8_t> read_bytes(const std::string &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open " + path, 0);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
}

static std::uint32_t get_u32be(const std::vector<std::uint8_t> &b, std::size_t at) {
  if (at + 4 > b.size()) throw ParseError("truncated IDX field", b.size());
  return (static_cast<std::uint32_t>(b[at]) << 24) |
         (static_cast<std::uint32_t>(b[at + 1]) << 16) |
         (static_cast<std::uint32_t>(b[at + 2]) << 8) |
         static_cast<std::uint32_t>(b[at + 3]);
}

Dataset load_idx(const std::string &images_path, const std::string &labels_path) {
  const std::vector<std::uint8_t> img = read_bytes(images_path);
  if (img.empty()) throw ParseError("empty IDX image file " + images_path, 0);
  if (get_u32be(img, 0) != 0x00000803u)
    throw ParseError("bad IDX image magic in " + images_path, 0);
  const std::uint32_t count = get_u32be(img, 4);
  const std::uint32_t rows = get_u32be(img, 8);
  const std::uint32_t cols = get_u32be(img, 12);
  const std::size_t expect = 16 + static_cast<std::size_t>(count) * rows * cols;
  if (img.size() != expect)
    throw ParseError("IDX image payload has " + std::to_string(img.size() - 16) +
                         " bytes, header promises " + std::to_string(expect - 16),
                     std::min(img.size(), expect));

  const std::vector<std::uint8_t> lab = read_bytes(labels_path);
  if (lab.empty()) throw ParseError("empty IDX label file " + labels_path, 0);
  if (get_u32be(lab, 0) != 0x00000801u)
    throw ParseError("bad IDX label magic in " + labels_path, 0);
  const std::uint32_t lcount = get_u32be(lab, 4);
  if (lab.size() != 8 + static_cast<std::size_t>(lcount))
    throw ParseError("IDX label payload truncated", std::min<std::size_t>(lab.size(), 8 + lcount));
  if (lcount != count)
    throw ParseError("image count " + std::to_string(count) +
                         " does not match label count " + std::to_string(lcount),
                     4);

  Dataset ds;
  const std::size_t dim = static_cast<std::size_t>(rows) * cols;
  ds.inputs = Matrix(count, dim);
  for (std::size_t i = 0; i < static_cast<std::size_t>(count) * dim; ++i)
    ds.inputs.data[i] = static_cast<double>(img[16 + i]) / 255.0;
  ds.labels.resize(count);
  int max_label = 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    ds.labels[i] = static_cast<int>(lab[8 + i]);
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.meta.name = images_path;
  ds.meta.dim = static_cast<int>(dim);
  ds.meta.num_classes = max_label + 1;
  return ds;
}

static void put_u32be(std::vector<std::uint8_t> &out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

void write_idx(const Dataset &ds, const std::string &images_path,
               const std::string &labels_path, std::size_t rows, std::size_t cols) {
  const std::size_t dim = ds.inputs.cols;
  if (rows == 0 || cols == 0) {
    rows = dim;
    cols = 1;
    // Prefer a square raster when the dimension is a perfect square (e.g. 784).
    const std::size_t rt = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
    if (rt * rt == dim) {
      rows = rt;
      cols = rt;
    }
  }
  if (rows * cols != dim) throw ConfigError("write_idx: rows*cols must equal input dim");

  std::vector<std::uint8_t> img;
  img.reserve(16 + ds.size() * dim);
  put_u32be(img, 0x00000803u);
  put_u32be(img, static_cast<std::uint32_t>(ds.size()));
  put_u32be(img, static_cast<std::uint32_t>(rows));
  put_u32be(img, static_cast<std::uint32_t>(cols));
  for (double v : ds.inputs.data) {
    const double q = std::clamp(std::round(v * 255.0), 0.0, 255.0);
    img.push_back(static_cast<std::uint8_t>(q));
  }

  std::vector<std::uint8_t> lab;
  lab.reserve(8 + ds.size());
  put_u32be(lab, 0x00000801u);
  put_u32be(lab, static_cast<std::uint32_t>(ds.size()));
  for (int l : ds.labels) lab.push_back(static_cast<std::uint8_t>(l));

  std::ofstream fi(images_path, std::ios::binary | std::ios::trunc);
  if (!fi) throw ParseError("cannot open " + images_path + " for writing", 0);
  fi.write(reinterpret_cast<const char *>(img.data()), static_cast<std::streamsize>(img.size()));
  std::ofstream fl(labels_path, std::ios::binary | std::ios::trunc);
  if (!fl) throw ParseError("cannot open " + labels_path + " for writing", 0);
  fl.write(reinterpret_cast<const char *>(lab.data()), static_cast<std::streamsize>(lab.size()));
}

static Dataset take(const Dataset &ds, const std::vector<std::size_t> &idx,
                    const std::string &tag) {
  Dataset out;
  out.inputs = Matrix(idx.size(), ds.inputs.cols);
  out.labels.resize(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy(ds.inputs.row(idx[i]), ds.inputs.row(idx[i]) + ds.inputs.cols,
              out.inputs.row(i));
    out.labels[i] = ds.labels[idx[i]];
  }
  out.meta = ds.meta;
  out.meta.split_tag = tag;
  return out;
}

std::pair<Dataset, Dataset> split_half(const Dataset &ds, std::uint64_t seed) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  const std::size_t first = (ds.size() + 1) / 2;
  std::vector<std::size_t> a(idx.begin(), idx.begin() + first);
  std::vector<std::size_t> b(idx.begin() + first, idx.end());
  return {take(ds, a, "half0"), take(ds, b, "half1")};
}

Dataset synth_blobs(int num_classes, int dim, int per_class, double separation,
                    std::uint64_t seed, std::uint64_t sample_seed) {
  if (num_classes < 1 || dim < 1 || per_class < 1)
    throw ConfigError("synth_blobs: counts must be >= 1");
  if (dim < num_classes)
    throw ConfigError("synth_blobs: dim must be >= num_classes for orthonormal means");
  const double sigma = 0.05;
  Rng rng(seed);

  // Orthonormal class directions by Gram-Schmidt on Gaussian draws.
  std::vector<std::vector<double>> dirs(num_classes, std::vector<double>(dim));
  for (int c = 0; c < num_classes; ++c) {
    for (double &x : dirs[c]) x = rng.normal();
    for (int k = 0; k < c; ++k) {
      const double proj = dot(dirs[c], dirs[k]);
      axpy(-proj, dirs[k], dirs[c]);
    }
    const double norm = std::sqrt(dot(dirs[c], dirs[c]));
    for (double &x : dirs[c]) x /= norm;
  }
  const double radius = separation * sigma / std::sqrt(2.0);
  Rng noise(sample_seed == 0 ? seed ^ 0x5a3c7e19d2b40f68ull : sample_seed);

  Dataset ds;
  ds.inputs = Matrix(static_cast<std::size_t>(num_classes) * per_class, dim);
  ds.labels.resize(ds.inputs.rows);
  std::size_t at = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int s = 0; s < per_class; ++s, ++at) {
      double *row = ds.inputs.row(at);
      for (int j = 0; j < dim; ++j) {
        const double v = 0.5 + radius * dirs[c][j] + sigma * noise.normal();
        row[j] = std::clamp(v, 0.0, 1.0);
      }
      ds.labels[at] = c;
    }
  }
  ds.meta.name = "blobs";
  ds.meta.dim = dim;
  ds.meta.num_classes = num_classes;
  return ds;
}

Dataset synth_binary(int modes, int dim, int count, std::uint64_t seed,
                     std::uint64_t sample_seed) {
  if (modes < 1 || dim < 1 || count < 1)
    throw ConfigError("synth_binary: counts must be >= 1");
  Rng rng(seed);
  std::vector<std::vector<double>> proto(modes, std::vector<double>(dim));
  for (auto &p : proto)
    for (double &x : p) x = rng.bernoulli(0.5) ? 0.9 : 0.1;

  Rng noise(sample_seed == 0 ? seed ^ 0x5a3c7e19d2b40f68ull : sample_seed);
  Dataset ds;
  ds.inputs = Matrix(count, dim);
  ds.labels.resize(count);
  for (int i = 0; i < count; ++i) {
    const int m = noise.uniform_int(modes);
    ds.labels[i] = m;
    double *row = ds.inputs.row(i);
    for (int j = 0; j < dim; ++j) row[j] = noise.bernoulli(proto[m][j]) ? 1.0 : 0.0;
  }
  ds.meta.name = "binary";
  ds.meta.dim = dim;
  ds.meta.num_classes = modes;
  return ds;
}

Dataset binarize(const Dataset &ds, double threshold) {
  Dataset out = ds;
  for (double &v : out.inputs.data) v = v > threshold ? 1.0 : 0.0;
  out.meta.name += "-bin";
  return out;
}

Dataset subsample(const Dataset &ds, std::size_t count, std::uint64_t seed) {
  if (count == 0 || count >= ds.size()) return ds;
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return take(ds, idx, ds.meta.split_tag);
}

}  // namespace grdn
