// grdn/gradnet.hpp

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
#include <optional>
#include <string>
#include <vector>

#include "grdn/data.hpp"
#include "grdn/grad_features.hpp"
#include "grdn/network.hpp"

namespace grdn {

/// How hidden blocks wire to base-network layers. adjacent_pair feeds block i
/// from the gradient coordinates of base layers i and i+1 (clamped at the
/// last layer), capturing connections between gradients of adjacent layers;
/// single_layer feeds block i from layer i only.
enum class Wiring { adjacent_pair, single_layer };

enum class OptKind { sgd, adam };

struct GradNetSpec {
  std::vector<int> block_sizes;  // e.g. {5, 100, 25}
  Wiring wiring = Wiring::adjacent_pair;
  int num_classes = 0;
  double dropout_p = 0.0;       // 0 disables dropout; 0.5 when enabled
  bool use_batchnorm = false;
  OptKind optimizer = OptKind::sgd;
  double lr = 0.01;             // sgd default; adam default is 0.001
  int epochs = 5;
  int batch_size = 32;
  std::uint64_t seed = 1;
};

struct BlockRange {
  std::size_t lo = 0, hi = 0;  // half-open over gradient coordinates

  std::size_t len() const { return hi - lo; }
};

/// One block per parameterized base layer; throws ConfigError when the block
/// count disagrees with the base layout.
std::vector<BlockRange> input_partition(const ParamLayout &base_layout,
                                        Wiring wiring, std::size_t num_blocks);

/// Two-layer classifier over gradient features. Block weight matrices only
/// materialize their own input range, so the structural sparsity is a hard
/// constraint rather than a soft mask.
struct GradNetModel {
  GradNetSpec spec;
  std::vector<BlockRange> partition;
  std::vector<Matrix> block_w;              // units x range length
  std::vector<std::vector<double>> block_b;
  Matrix out_w;                             // num_classes x hidden
  std::vector<double> out_b;
  // batchnorm over the concatenated hidden pre-activation
  std::vector<double> bn_gamma, bn_beta, bn_mean, bn_var;

  std::size_t hidden_dim() const;
};

GradNetModel init_gradnet(const GradNetSpec &spec, const ParamLayout &base_layout);

/// Class probabilities for one feature, inference mode (running batchnorm
/// statistics, no dropout). Absent coordinates contribute 0.
std::vector<double> gradnet_forward(const GradNetModel &model,
                                    const GradFeature &feature);

/// Gradient-feature construction shared by training, prediction and the
/// extract command: percentile sparsification, optional per-label mask,
/// normalization pipeline, optional Gaussian input jitter at train time.
struct FeatureConfig {
  double q = 85.0;
  NormPipeline pipeline;
  bool use_label_mask = false;
  double mask_keep = 0.10;
  std::optional<LabelMask> mask;
  double jitter_sigma = 0.0;
  /// Cap on samples used by the mask/stats fitting passes (0 = all).
  std::size_t fit_sample_cap = 1000;
};

/// Builds one feature from a dense gradient: sparsify, mask, normalize.
GradFeature make_feature(const FeatureConfig &fc, std::span<const double> grad,
                         std::int64_t sample_id, int hyp_label);

/// Fits whatever the config still needs (label masks over hypothesized
/// labels, standard-norm statistics over the sparsified gradient training
/// set). No-op when nothing is required.
void fit_feature_config(FeatureConfig &fc, const NetworkSpec &base_spec,
                        const ParamLayout &layout, const ParamVector &params,
                        const Dataset &data, std::uint64_t seed);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  /// Fraction of training features whose single forward output matched the
  /// true label (a cheap proxy, not the summed prediction rule).
  double train_acc = 0.0;
};

struct TrainResult {
  GradNetModel model;
  std::vector<EpochMetrics> trace;
};

/// Algorithm: per epoch, per batch, optionally jitter the inputs, draw fresh
/// random hypothesized labels, compute and normalize the per-sample
/// gradients, and update the classifier by cross-entropy against the true
/// labels. Throws NumericError with epoch/batch context on non-finite loss.
TrainResult train_gradnet(const NetworkSpec &base_spec, const ParamLayout &layout,
                          const ParamVector &base_params, const Dataset &data,
                          const GradNetSpec &net_spec, FeatureConfig fc,
                          int threads = 1);

/// Same update rule over a frozen feature stream (one pass per epoch, no
/// label redraw). Targets are looked up by sample_id in `labels`.
TrainResult train_gradnet_on_features(const std::vector<GradFeature> &features,
                                      const std::vector<int> &labels,
                                      const GradNetSpec &net_spec,
                                      const ParamLayout &base_layout);

/// argmax_c sum over hypothesized labels of the class-probability outputs;
/// ties break to the lowest class id.
int gradnet_predict(const NetworkSpec &base_spec, const ParamLayout &layout,
                    const ParamVector &base_params, const GradNetModel &model,
                    const FeatureConfig &fc, std::span<const double> x);

struct EvalMetrics {
  double accuracy = 0.0;
  std::vector<double> per_class;
  Matrix confusion;  // rows = true class, cols = predicted
  std::size_t count = 0;
};

EvalMetrics evaluate_gradnet(const NetworkSpec &base_spec, const ParamLayout &layout,
                             const ParamVector &base_params, const GradNetModel &model,
                             const FeatureConfig &fc, const Dataset &test,
                             int threads = 1);

/// "GRDN" container, kind "gradnet": block spec + partition + feature
/// pipeline (with fitted statistics and masks) + base checkpoint hash.
void save_gradnet(const std::string &path, const GradNetModel &model,
                  const FeatureConfig &fc, const std::string &base_hash,
                  const nlohmann::json &meta = nlohmann::json::object());

struct GradnetCheckpoint {
  GradNetModel model;
  FeatureConfig fc;
  std::string base_hash;
  nlohmann::json meta;
};

GradnetCheckpoint load_gradnet(const std::string &path);

}  // namespace grdn
