// grdn/config.hpp

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
#include <vector>

#include <json.hpp>

namespace grdn {

struct DataConfig {
  std::string kind = "blobs";  // "idx" | "blobs" | "binary"
  std::string images, labels, test_images, test_labels;
  int num_classes = 10;
  int dim = 784;
  int per_class = 100;
  double separation = 8.0;
  int test_per_class = 0;  // 0 -> max(per_class / 5, 1)
  int modes = 2;
  int count = 1000;
  int test_count = 0;  // 0 -> max(count / 5, 1)
  std::size_t limit = 0;     // subsample the training set (0 = all)
  std::string split = "none";  // "none" | "half"
  std::uint64_t split_seed = 7;
};

struct BaseTrainConfig {
  std::vector<int> hidden_dims = {300, 100};
  std::string optimizer = "sgd";  // "sgd" | "adam"
  double lr = 0.1;
  int batch_size = 32;
  int epochs = 10;
  std::vector<double> snapshot_thresholds = {0.92, 0.96};
  /// Extra held-out evaluations every N batches (0 = epoch end only); used to
  /// land snapshots inside a narrow accuracy window.
  int eval_every_batches = 0;
};

struct GradsConfig {
  double q = 85.0;
  std::string label_mode = "random";  // "random" | "all" | "true"
  std::string percentile_scope = "per_vector";
  std::vector<std::string> norm = {"scale", "power(0.5)"};
  bool use_label_mask = false;
  double mask_keep = 0.10;
  double jitter_sigma = 0.0;
  std::size_t fit_sample_cap = 1000;
};

struct GradnetConfig {
  std::vector<int> blocks = {5, 100, 25};
  std::string wiring = "adjacent_pair";  // "adjacent_pair" | "single_layer"
  std::string optimizer = "sgd";
  double lr = 0.0;  // 0 -> 0.01 for sgd, 0.001 for adam
  int epochs = 5;
  int batch_size = 32;
  double dropout_p = 0.0;
  bool batchnorm = false;
};

struct RbmConfig {
  int hidden = 16;
  int cd_k = 1;
  double lr = 0.05;
  int epochs = 1;
  int batch_size = 32;
  double init_scale = 0.01;
  double binarize_threshold = 0.5;
  int classifier_epochs = 10;
  double classifier_lr = 0.1;
};

struct KernelCheckConfig {
  int input_dim = 2;
  std::vector<int> hidden_dims = {3};
  int num_classes = 2;
  int num_grads = 32;
  int reparams = 20;
};

struct GradGraphConfig {
  double alpha = 0.1;
  double q = 99.0;  // pre-sparsification percentile; < 0 keeps exact nonzeros
  std::size_t sample = 0;
};

/// One JSON document; CLI flags override config fields which override
/// defaults, and the env var GRDN_SEED overrides the config seed.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency
  bool determinism = true;
  std::string out_dir = "out";
  DataConfig data;
  BaseTrainConfig train;
  GradsConfig grads;
  GradnetConfig gradnet;
  RbmConfig rbm;
  KernelCheckConfig kernel_check;
  GradGraphConfig gradgraph;
};

nlohmann::json config_to_json(const ExperimentConfig &cfg);
ExperimentConfig config_from_json(const nlohmann::json &j);

/// Parses the file, applies GRDN_SEED, and validates.
ExperimentConfig load_config_file(const std::string &path);
/// Defaults plus GRDN_SEED.
ExperimentConfig default_config();

/// Content hash of the fully resolved config, embedded into every artifact.
std::string config_hash(const ExperimentConfig &cfg);

/// Resolved gradnet learning rate (optimizer-dependent default).
double gradnet_lr(const GradnetConfig &g);

}  // namespace grdn
