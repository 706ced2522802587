// grdn/commands.hpp

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

#include <string>
#include <vector>

#include <json.hpp>

#include "grdn/config.hpp"
#include "grdn/data.hpp"
#include "grdn/grad_features.hpp"
#include "grdn/gradnet.hpp"

namespace grdn {

/// Datasets a command works with. base_train feeds the base network,
/// grad_train feeds gradient extraction and the shallow classifier (the other
/// half under a "half" split), test is the held-out evaluation set.
struct ResolvedData {
  Dataset base_train;
  Dataset grad_train;
  Dataset test;
};

ResolvedData resolve_data(const ExperimentConfig &cfg);

/// "+10.2%" style relative gain string.
std::string format_gain(double gain);

struct TrainBaseResult {
  std::vector<std::string> snapshot_paths;
  std::vector<double> snapshot_accuracies;
  std::string final_path;
  std::string metrics_path;
  double final_accuracy = 0.0;
  bool all_thresholds_reached = true;
};

/// Trains the base MLP, evaluating held-out accuracy per epoch (plus every
/// train.eval_every_batches batches when set) and snapshotting the first time
/// each configured threshold is crossed. Unreachable thresholds produce a
/// warning and partial snapshots.
TrainBaseResult run_train_base(const ExperimentConfig &cfg);

struct ExtractResult {
  std::string path;
  std::size_t count = 0;
};

/// Streams sparsified, normalized gradient features of grad_train into a
/// "GRDF" file stamped with the base checkpoint hash.
ExtractResult run_extract(const ExperimentConfig &cfg,
                          const std::string &base_checkpoint,
                          const std::string &out_path);

struct TrainGradnetResult {
  std::string model_path;
  std::string metrics_path;
  std::vector<EpochMetrics> trace;
};

/// Trains the shallow classifier per the config. With grads_path empty the
/// gradient stream is recomputed each epoch with fresh random labels; with a
/// "GRDF" file the frozen features are replayed (hash-checked against the
/// base checkpoint).
TrainGradnetResult run_train_gradnet(const ExperimentConfig &cfg,
                                     const std::string &base_checkpoint,
                                     const std::string &grads_path,
                                     const std::string &out_model,
                                     const std::string &metrics_csv);

struct EvalResult {
  double base_accuracy = 0.0;
  double gradnet_accuracy = 0.0;
  double gain = 0.0;  // gradnet/base - 1
  std::size_t count = 0;
  std::string json_path;
  std::string csv_path;
};

/// Reports base accuracy, classifier accuracy and the relative gain on the
/// test split. Refuses to run when the classifier checkpoint was trained
/// against a different base checkpoint.
EvalResult run_eval(const ExperimentConfig &cfg, const std::string &base_checkpoint,
                    const std::string &gradnet_checkpoint,
                    const std::string &out_prefix);

struct RbmResult {
  double original_accuracy = 0.0;  // linear model on hidden activations
  double improved_accuracy = 0.0;  // linear model on normalized tangent features
  std::string model_path;
  std::string json_path;
};

RbmResult run_rbm(const ExperimentConfig &cfg);

struct KernelCheckResult {
  nlohmann::json report;
  bool pass = false;
};

/// Symmetry + PSD suite on a tiny network's gradient Gram matrix, plus the
/// reparametrization-invariance suite on a spanning tangent set with zero
/// ridge. Prints the JSON report to stdout.
KernelCheckResult run_kernel_check(const ExperimentConfig &cfg,
                                   const std::string &out_json);

struct GradGraphResult {
  std::string dot_path;
  GradGraph graph;
};

GradGraphResult run_gradgraph(const ExperimentConfig &cfg,
                              const std::string &base_checkpoint,
                              const std::string &out_dot);

}  // namespace grdn
