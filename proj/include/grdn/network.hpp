// grdn/network.hpp

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
#include <span>
#include <vector>

#include "grdn/la.hpp"

namespace grdn {

enum class Activation { relu };

/// Architecture of a fully connected softmax classifier. hidden_dims may be
/// empty, which gives a plain multinomial logistic regression.
struct NetworkSpec {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int num_classes = 0;
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;

  /// [input_dim, hidden..., num_classes]
  std::vector<int> dims() const;
  /// Throws ConfigError unless every dimension is >= 1.
  void validate() const;
};

/// Coordinate ranges of one parameterized layer inside the flat vector.
/// Weights come first (row-major, rows = output units, cols = input units),
/// then the bias. The ordering is part of the checkpoint format.
struct LayerRange {
  int layer = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t bias_len = 0;
  std::size_t begin = 0;  // half-open [begin, end)
  std::size_t end = 0;

  std::size_t weight_count() const { return rows * cols; }
  std::size_t size() const { return end - begin; }
  std::size_t bias_begin() const { return begin + weight_count(); }
};

struct ParamLayout {
  std::vector<LayerRange> layers;
  std::size_t total = 0;

  static ParamLayout from_spec(const NetworkSpec &spec);
  /// Layer index owning flat coordinate i.
  int layer_of(std::size_t i) const;
  /// Throws ConfigError if ranges are not contiguous, non-overlapping and
  /// covering [0, total).
  void validate() const;
};

using ParamVector = std::vector<double>;

struct SampleBatch {
  Matrix inputs;            // batch x input_dim
  std::vector<int> labels;  // empty when absent

  bool has_labels() const { return !labels.empty(); }
  std::size_t size() const { return inputs.rows; }
};

/// Weights from U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
/// Deterministic given spec.seed; draw order is layer order, weights
/// row-major, so checkpoints are bit-reproducible.
ParamVector init_params(const NetworkSpec &spec);

/// Class probabilities, one softmax row per sample. Rows are stabilized by
/// max subtraction before exponentiation.
Matrix forward(const NetworkSpec &spec, const ParamLayout &layout,
               const ParamVector &params, const Matrix &inputs);

/// Mean cross-entropy over the batch, in nats. Probabilities are floored at
/// 1e-300 before the log so a confidently wrong model yields a finite loss.
double loss(const NetworkSpec &spec, const ParamLayout &layout,
            const ParamVector &params, const SampleBatch &batch);

/// Reusable scratch for single-sample forward/backward passes.
struct WorkBuffers {
  std::vector<std::vector<double>> acts;  // acts[0] = input, acts[L] = probs
  std::vector<std::vector<double>> pre;   // pre-activations per layer
  std::vector<double> delta, delta_next;
};

/// Exact gradient of the per-sample cross-entropy with respect to every
/// parameter, in layout order. The ReLU subgradient at exactly 0 is 0.
/// Returns the per-sample loss.
double per_sample_gradient(const NetworkSpec &spec, const ParamLayout &layout,
                           const ParamVector &params, std::span<const double> x,
                           int label, std::span<double> grad_out,
                           WorkBuffers *wb = nullptr);

/// Arithmetic mean of per-sample gradients; returns the mean loss. Partial
/// sums are accumulated per fixed 32-sample block and reduced in block order,
/// so the result is bit-identical for any thread count.
double mean_gradient(const NetworkSpec &spec, const ParamLayout &layout,
                     const ParamVector &params, const SampleBatch &batch,
                     std::span<double> grad_out, int threads = 1);

/// theta <- theta - lr * g. Throws NumericError on a non-finite gradient.
void sgd_step(ParamVector &params, std::span<const double> grad, double lr);

struct AdamState {
  std::vector<double> m, v;
  std::int64_t t = 0;
};

struct AdamParams {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Standard bias-corrected Adam update.
void adam_step(ParamVector &params, std::span<const double> grad,
               AdamState &state, const AdamParams &hp);

/// Argmax predictions per row; ties break to the lowest class id.
std::vector<int> predict_classes(const Matrix &probs);

double accuracy(const NetworkSpec &spec, const ParamLayout &layout,
                const ParamVector &params, const SampleBatch &batch,
                int threads = 1);

}  // namespace grdn
