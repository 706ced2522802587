// grdn/config.cpp

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

#include "grdn/config.hpp"

#include <cstdlib>
#include <fstream>

#include "grdn/checkpoint.hpp"
#include "grdn/errors.hpp"
#include "grdn/grad_features.hpp"

namespace grdn {

nlohmann::json config_to_json(const ExperimentConfig &cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  j["determinism"] = cfg.determinism;
  j["out_dir"] = cfg.out_dir;
  j["data"] = {{"kind", cfg.data.kind},
               {"images", cfg.data.images},
               {"labels", cfg.data.labels},
               {"test_images", cfg.data.test_images},
               {"test_labels", cfg.data.test_labels},
               {"num_classes", cfg.data.num_classes},
               {"dim", cfg.data.dim},
               {"per_class", cfg.data.per_class},
               {"separation", cfg.data.separation},
               {"test_per_class", cfg.data.test_per_class},
               {"modes", cfg.data.modes},
               {"count", cfg.data.count},
               {"test_count", cfg.data.test_count},
               {"limit", cfg.data.limit},
               {"split", cfg.data.split},
               {"split_seed", cfg.data.split_seed}};
  j["train"] = {{"hidden_dims", cfg.train.hidden_dims},
                {"optimizer", cfg.train.optimizer},
                {"lr", cfg.train.lr},
                {"batch_size", cfg.train.batch_size},
                {"epochs", cfg.train.epochs},
                {"snapshot_thresholds", cfg.train.snapshot_thresholds},
                {"eval_every_batches", cfg.train.eval_every_batches}};
  j["grads"] = {{"q", cfg.grads.q},
                {"label_mode", cfg.grads.label_mode},
                {"percentile_scope", cfg.grads.percentile_scope},
                {"norm", cfg.grads.norm},
                {"use_label_mask", cfg.grads.use_label_mask},
                {"mask_keep", cfg.grads.mask_keep},
                {"jitter_sigma", cfg.grads.jitter_sigma},
                {"fit_sample_cap", cfg.grads.fit_sample_cap}};
  j["gradnet"] = {{"blocks", cfg.gradnet.blocks},
                  {"wiring", cfg.gradnet.wiring},
                  {"optimizer", cfg.gradnet.optimizer},
                  {"lr", cfg.gradnet.lr},
                  {"epochs", cfg.gradnet.epochs},
                  {"batch_size", cfg.gradnet.batch_size},
                  {"dropout_p", cfg.gradnet.dropout_p},
                  {"batchnorm", cfg.gradnet.batchnorm}};
  j["rbm"] = {{"hidden", cfg.rbm.hidden},
              {"cd_k", cfg.rbm.cd_k},
              {"lr", cfg.rbm.lr},
              {"epochs", cfg.rbm.epochs},
              {"batch_size", cfg.rbm.batch_size},
              {"init_scale", cfg.rbm.init_scale},
              {"binarize_threshold", cfg.rbm.binarize_threshold},
              {"classifier_epochs", cfg.rbm.classifier_epochs},
              {"classifier_lr", cfg.rbm.classifier_lr}};
  j["kernel_check"] = {{"input_dim", cfg.kernel_check.input_dim},
                       {"hidden_dims", cfg.kernel_check.hidden_dims},
                       {"num_classes", cfg.kernel_check.num_classes},
                       {"num_grads", cfg.kernel_check.num_grads},
                       {"reparams", cfg.kernel_check.reparams}};
  j["gradgraph"] = {{"alpha", cfg.gradgraph.alpha},
                    {"q", cfg.gradgraph.q},
                    {"sample", cfg.gradgraph.sample}};
  return j;
}

template <typename T>
static void get_if(const nlohmann::json &j, const char *key, T &out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

ExperimentConfig config_from_json(const nlohmann::json &j) {
  ExperimentConfig cfg;
  get_if(j, "seed", cfg.seed);
  get_if(j, "threads", cfg.threads);
  get_if(j, "determinism", cfg.determinism);
  get_if(j, "out_dir", cfg.out_dir);
  if (j.contains("data")) {
    const nlohmann::json &d = j.at("data");
    get_if(d, "kind", cfg.data.kind);
    get_if(d, "images", cfg.data.images);
    get_if(d, "labels", cfg.data.labels);
    get_if(d, "test_images", cfg.data.test_images);
    get_if(d, "test_labels", cfg.data.test_labels);
    get_if(d, "num_classes", cfg.data.num_classes);
    get_if(d, "dim", cfg.data.dim);
    get_if(d, "per_class", cfg.data.per_class);
    get_if(d, "separation", cfg.data.separation);
    get_if(d, "test_per_class", cfg.data.test_per_class);
    get_if(d, "modes", cfg.data.modes);
    get_if(d, "count", cfg.data.count);
    get_if(d, "test_count", cfg.data.test_count);
    get_if(d, "limit", cfg.data.limit);
    get_if(d, "split", cfg.data.split);
    get_if(d, "split_seed", cfg.data.split_seed);
  }
  if (j.contains("train")) {
    const nlohmann::json &t = j.at("train");
    get_if(t, "hidden_dims", cfg.train.hidden_dims);
    get_if(t, "optimizer", cfg.train.optimizer);
    get_if(t, "lr", cfg.train.lr);
    get_if(t, "batch_size", cfg.train.batch_size);
    get_if(t, "epochs", cfg.train.epochs);
    get_if(t, "snapshot_thresholds", cfg.train.snapshot_thresholds);
    get_if(t, "eval_every_batches", cfg.train.eval_every_batches);
  }
  if (j.contains("grads")) {
    const nlohmann::json &g = j.at("grads");
    get_if(g, "q", cfg.grads.q);
    get_if(g, "label_mode", cfg.grads.label_mode);
    get_if(g, "percentile_scope", cfg.grads.percentile_scope);
    get_if(g, "norm", cfg.grads.norm);
    get_if(g, "use_label_mask", cfg.grads.use_label_mask);
    get_if(g, "mask_keep", cfg.grads.mask_keep);
    get_if(g, "jitter_sigma", cfg.grads.jitter_sigma);
    get_if(g, "fit_sample_cap", cfg.grads.fit_sample_cap);
  }
  if (j.contains("gradnet")) {
    const nlohmann::json &g = j.at("gradnet");
    get_if(g, "blocks", cfg.gradnet.blocks);
    get_if(g, "wiring", cfg.gradnet.wiring);
    get_if(g, "optimizer", cfg.gradnet.optimizer);
    get_if(g, "lr", cfg.gradnet.lr);
    get_if(g, "epochs", cfg.gradnet.epochs);
    get_if(g, "batch_size", cfg.gradnet.batch_size);
    get_if(g, "dropout_p", cfg.gradnet.dropout_p);
    get_if(g, "batchnorm", cfg.gradnet.batchnorm);
  }
  if (j.contains("rbm")) {
    const nlohmann::json &r = j.at("rbm");
    get_if(r, "hidden", cfg.rbm.hidden);
    get_if(r, "cd_k", cfg.rbm.cd_k);
    get_if(r, "lr", cfg.rbm.lr);
    get_if(r, "epochs", cfg.rbm.epochs);
    get_if(r, "batch_size", cfg.rbm.batch_size);
    get_if(r, "init_scale", cfg.rbm.init_scale);
    get_if(r, "binarize_threshold", cfg.rbm.binarize_threshold);
    get_if(r, "classifier_epochs", cfg.rbm.classifier_epochs);
    get_if(r, "classifier_lr", cfg.rbm.classifier_lr);
  }
  if (j.contains("kernel_check")) {
    const nlohmann::json &k = j.at("kernel_check");
    get_if(k, "input_dim", cfg.kernel_check.input_dim);
    get_if(k, "hidden_dims", cfg.kernel_check.hidden_dims);
    get_if(k, "num_classes", cfg.kernel_check.num_classes);
    get_if(k, "num_grads", cfg.kernel_check.num_grads);
    get_if(k, "reparams", cfg.kernel_check.reparams);
  }
  if (j.contains("gradgraph")) {
    const nlohmann::json &g = j.at("gradgraph");
    get_if(g, "alpha", cfg.gradgraph.alpha);
    get_if(g, "q", cfg.gradgraph.q);
    get_if(g, "sample", cfg.gradgraph.sample);
  }
  return cfg;
}

static void validate(const ExperimentConfig &cfg) {
  if (cfg.data.kind != "idx" && cfg.data.kind != "blobs" && cfg.data.kind != "binary")
    throw ConfigError("data.kind must be \"idx\", \"blobs\" or \"binary\"");
  if (cfg.data.split != "none" && cfg.data.split != "half")
    throw ConfigError("data.split must be \"none\" or \"half\"");
  if (cfg.grads.percentile_scope != "per_vector")
    throw ConfigError(
        "grads.percentile_scope: only \"per_vector\" is implemented");
  if (cfg.grads.q < 0.0 || cfg.grads.q >= 100.0)
    throw ConfigError("grads.q must be in [0, 100)");
  label_mode_from_name(cfg.grads.label_mode);
  parse_norm_steps(cfg.grads.norm);
  if (cfg.train.optimizer != "sgd" && cfg.train.optimizer != "adam")
    throw ConfigError("train.optimizer must be \"sgd\" or \"adam\"");
  if (cfg.gradnet.optimizer != "sgd" && cfg.gradnet.optimizer != "adam")
    throw ConfigError("gradnet.optimizer must be \"sgd\" or \"adam\"");
  if (cfg.gradnet.wiring != "adjacent_pair" && cfg.gradnet.wiring != "single_layer")
    throw ConfigError("gradnet.wiring must be \"adjacent_pair\" or \"single_layer\"");
}

static void apply_env_seed(ExperimentConfig &cfg) {
  if (const char *env = std::getenv("GRDN_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception &) {
      throw ConfigError("GRDN_SEED is not an unsigned integer");
    }
  }
}

ExperimentConfig load_config_file(const std::string &path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception &e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  ExperimentConfig cfg = config_from_json(j);
  apply_env_seed(cfg);
  validate(cfg);
  return cfg;
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  apply_env_seed(cfg);
  return cfg;
}

std::string config_hash(const ExperimentConfig &cfg) {
  const std::string dump = config_to_json(cfg).dump();
  return hash_hex(fnv1a64(dump.data(), dump.size()));
}

double gradnet_lr(const GradnetConfig &g) {
  if (g.lr > 0.0) return g.lr;
  return g.optimizer == "adam" ? 0.001 : 0.01;
}

}  // namespace grdn
