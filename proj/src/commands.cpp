// grdn/commands.cpp

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

#include "grdn/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>

#include "grdn/checkpoint.hpp"
#include "grdn/errors.hpp"
#include "grdn/metric.hpp"
#include "grdn/parallel.hpp"
#include "grdn/rbm.hpp"
#include "grdn/rng.hpp"

namespace grdn {

namespace fs = std::filesystem;

std::string format_gain(double gain) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f%%", gain * 100.0);
  return buf;
}

static void ensure_dir(const std::string &dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir);
}

static std::ofstream open_out(const std::string &path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot open " + path + " for writing");
  return f;
}

static std::vector<std::string> provenance(const ExperimentConfig &cfg) {
  return {"config_hash=" + config_hash(cfg), "seed=" + std::to_string(cfg.seed),
          "determinism=" + std::string(cfg.determinism ? "true" : "false")};
}

ResolvedData resolve_data(const ExperimentConfig &cfg) {
  const DataConfig &d = cfg.data;
  Dataset train, test;
  if (d.kind == "idx") {
    if (d.images.empty() || d.labels.empty())
      throw ConfigError("data.kind=idx needs data.images and data.labels");
    if (d.test_images.empty() || d.test_labels.empty())
      throw ConfigError("data.kind=idx needs data.test_images and data.test_labels");
    train = load_idx(d.images, d.labels);
    test = load_idx(d.test_images, d.test_labels);
    train.meta.num_classes = test.meta.num_classes =
        std::max(train.meta.num_classes, test.meta.num_classes);
  } else if (d.kind == "blobs") {
    const int test_pc = d.test_per_class > 0 ? d.test_per_class
                                             : std::max(d.per_class / 5, 1);
    // Same class structure, disjoint noise streams for train and test.
    train = synth_blobs(d.num_classes, d.dim, d.per_class, d.separation, cfg.seed,
                        cfg.seed + 1);
    test = synth_blobs(d.num_classes, d.dim, test_pc, d.separation, cfg.seed,
                       cfg.seed ^ 0x7e57da7aull);
  } else {
    const int test_count = d.test_count > 0 ? d.test_count : std::max(d.count / 5, 1);
    train = synth_binary(d.modes, d.dim, d.count, cfg.seed, cfg.seed + 1);
    test = synth_binary(d.modes, d.dim, test_count, cfg.seed, cfg.seed ^ 0x7e57da7aull);
  }
  if (d.limit > 0) train = subsample(train, d.limit, d.split_seed ^ 0x11f0ull);
  test.meta.split_tag = "test";

  ResolvedData out;
  out.test = std::move(test);
  if (d.split == "half") {
    auto [a, b] = split_half(train, d.split_seed);
    out.base_train = std::move(a);
    out.grad_train = std::move(b);
  } else {
    out.base_train = train;
    out.grad_train = std::move(train);
  }
  return out;
}

static NetworkSpec base_spec_for(const ExperimentConfig &cfg, const Dataset &train) {
  NetworkSpec spec;
  spec.input_dim = train.meta.dim;
  spec.hidden_dims = cfg.train.hidden_dims;
  spec.num_classes = train.meta.num_classes;
  spec.seed = cfg.seed;
  return spec;
}

static FeatureConfig feature_config_for(const ExperimentConfig &cfg) {
  FeatureConfig fc;
  fc.q = cfg.grads.q;
  fc.pipeline.steps = parse_norm_steps(cfg.grads.norm);
  fc.use_label_mask = cfg.grads.use_label_mask;
  fc.mask_keep = cfg.grads.mask_keep;
  fc.jitter_sigma = cfg.grads.jitter_sigma;
  fc.fit_sample_cap = cfg.grads.fit_sample_cap;
  return fc;
}

static GradNetSpec gradnet_spec_for(const ExperimentConfig &cfg, int num_classes) {
  GradNetSpec s;
  s.block_sizes = cfg.gradnet.blocks;
  s.wiring = cfg.gradnet.wiring == "single_layer" ? Wiring::single_layer
                                                  : Wiring::adjacent_pair;
  s.num_classes = num_classes;
  s.dropout_p = cfg.gradnet.dropout_p;
  s.use_batchnorm = cfg.gradnet.batchnorm;
  s.optimizer = cfg.gradnet.optimizer == "adam" ? OptKind::adam : OptKind::sgd;
  s.lr = gradnet_lr(cfg.gradnet);
  s.epochs = cfg.gradnet.epochs;
  s.batch_size = cfg.gradnet.batch_size;
  s.seed = cfg.seed;
  return s;
}

// ---- train-base ---------------------------------------------------------

TrainBaseResult run_train_base(const ExperimentConfig &cfg) {
  ensure_dir(cfg.out_dir);
  const ResolvedData data = resolve_data(cfg);
  const NetworkSpec spec = base_spec_for(cfg, data.base_train);
  const ParamLayout layout = ParamLayout::from_spec(spec);
  ParamVector params = init_params(spec);
  const int threads = cfg.threads;

  std::vector<double> thresholds = cfg.train.snapshot_thresholds;
  std::sort(thresholds.begin(), thresholds.end());
  std::vector<bool> reached(thresholds.size(), false);

  AdamState adam;
  const AdamParams adam_hp{cfg.train.lr, 0.9, 0.999, 1e-8};
  const bool use_adam = cfg.train.optimizer == "adam";

  TrainBaseResult result;
  std::ofstream csv = open_out(cfg.out_dir + "/base_metrics.csv");
  for (const std::string &line : provenance(cfg)) csv << "# " << line << "\n";
  csv << "epoch,split,accuracy,loss\n";

  const SampleBatch test_batch = data.test.all();
  std::vector<double> grad(layout.total);
  Rng shuffle_rng(cfg.seed ^ 0x0ba5eull);
  std::vector<std::size_t> order(data.base_train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t B = static_cast<std::size_t>(cfg.train.batch_size);

  const auto snapshot_check = [&](double acc, int epoch, std::size_t batch_idx) {
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      if (reached[t] || acc < thresholds[t]) continue;
      reached[t] = true;
      char name[64];
      std::snprintf(name, sizeof name, "/snapshot_%.4g.grdn", thresholds[t]);
      const std::string path = cfg.out_dir + name;
      nlohmann::json meta{{"accuracy", acc},
                          {"threshold", thresholds[t]},
                          {"epoch", epoch},
                          {"batch", batch_idx},
                          {"eval_split", data.test.meta.split_tag},
                          {"config_hash", config_hash(cfg)},
                          {"seed", cfg.seed}};
      save_mlp(path, spec, layout, params, meta);
      result.snapshot_paths.push_back(path);
      result.snapshot_accuracies.push_back(acc);
    }
  };

  double last_acc = 0.0;
  for (int epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t at = 0; at < order.size(); at += B) {
      const std::size_t bsz = std::min(B, order.size() - at);
      std::vector<std::size_t> idx(order.begin() + at, order.begin() + at + bsz);
      const SampleBatch batch = data.base_train.batch(idx);
      const double batch_loss = mean_gradient(spec, layout, params, batch, grad, threads);
      try {
        if (use_adam)
          adam_step(params, grad, adam, adam_hp);
        else
          sgd_step(params, grad, cfg.train.lr);
      } catch (const NumericError &e) {
        throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches) + ")");
      }
      loss_sum += batch_loss;
      ++batches;
      if (cfg.train.eval_every_batches > 0 &&
          batches % static_cast<std::size_t>(cfg.train.eval_every_batches) == 0) {
        last_acc = accuracy(spec, layout, params, test_batch, threads);
        snapshot_check(last_acc, epoch, batches);
      }
    }
    last_acc = accuracy(spec, layout, params, test_batch, threads);
    snapshot_check(last_acc, epoch, batches);
    char row[128];
    std::snprintf(row, sizeof row, "%d,train,,%.17g\n", epoch,
                  loss_sum / static_cast<double>(batches));
    csv << row;
    std::snprintf(row, sizeof row, "%d,test,%.17g,\n", epoch, last_acc);
    csv << row;
    if (std::all_of(reached.begin(), reached.end(), [](bool r) { return r; }) &&
        !thresholds.empty())
      break;
  }

  result.final_accuracy = last_acc;
  result.final_path = cfg.out_dir + "/final.grdn";
  nlohmann::json meta{{"accuracy", last_acc},
                      {"eval_split", data.test.meta.split_tag},
                      {"config_hash", config_hash(cfg)},
                      {"seed", cfg.seed}};
  save_mlp(result.final_path, spec, layout, params, meta);
  result.metrics_path = cfg.out_dir + "/base_metrics.csv";
  result.all_thresholds_reached =
      std::all_of(reached.begin(), reached.end(), [](bool r) { return r; });
  if (!result.all_thresholds_reached)
    std::cerr << "warning: not every snapshot threshold was reached within "
              << cfg.train.epochs << " epochs; partial snapshots written\n";
  return result;
}

// ---- extract-grads --------------------------------------------------------

ExtractResult run_extract(const ExperimentConfig &cfg,
                          const std::string &base_checkpoint,
                          const std::string &out_path) {
  const MlpCheckpoint base = load_mlp(base_checkpoint);
  const std::string base_hash = file_hash_hex(base_checkpoint);
  const ResolvedData data = resolve_data(cfg);

  FeatureConfig fc = feature_config_for(cfg);
  fit_feature_config(fc, base.spec, base.layout, base.params, data.grad_train,
                     cfg.seed);

  GradFileHeader header;
  header.dense_len = static_cast<std::uint32_t>(base.layout.total);
  header.norm = fc.pipeline.tags();
  header.q = fc.q;
  header.label_mode = cfg.grads.label_mode;
  header.base_hash = base_hash;
  header.extra = {{"config_hash", config_hash(cfg)}, {"seed", cfg.seed}};

  GradFeatureWriter writer(out_path, header);
  const LabelMode mode = label_mode_from_name(cfg.grads.label_mode);
  for_each_gradient(base.spec, base.layout, base.params, data.grad_train.all(),
                    mode, cfg.seed,
                    [&](std::size_t s, int hyp, std::span<const double> g) {
                      writer.write(make_feature(fc, g, static_cast<std::int64_t>(s), hyp));
                    });
  const std::size_t count = writer.written();
  writer.close();
  return {out_path, count};
}

// ---- train-gradnet --------------------------------------------------------

TrainGradnetResult run_train_gradnet(const ExperimentConfig &cfg,
                                     const std::string &base_checkpoint,
                                     const std::string &grads_path,
                                     const std::string &out_model,
                                     const std::string &metrics_csv) {
  const MlpCheckpoint base = load_mlp(base_checkpoint);
  const std::string base_hash = file_hash_hex(base_checkpoint);
  const ResolvedData data = resolve_data(cfg);
  const GradNetSpec net_spec = gradnet_spec_for(cfg, base.spec.num_classes);

  FeatureConfig fc = feature_config_for(cfg);
  TrainResult trained;
  if (grads_path.empty()) {
    trained = train_gradnet(base.spec, base.layout, base.params, data.grad_train,
                            net_spec, fc, cfg.threads);
    // Pick up the statistics/masks the training pass fitted so prediction
    // uses the same pipeline.
    fit_feature_config(fc, base.spec, base.layout, base.params, data.grad_train,
                       net_spec.seed);
  } else {
    GradFileHeader header;
    const std::vector<GradFeature> features = load_grad_features(grads_path, &header);
    if (header.base_hash != base_hash)
      throw DataError("gradient file " + grads_path + " was extracted from base hash " +
                      header.base_hash + " but " + base_checkpoint + " hashes to " +
                      base_hash + "; refusing to run");
    fit_feature_config(fc, base.spec, base.layout, base.params, data.grad_train,
                       net_spec.seed);
    trained = train_gradnet_on_features(features, data.grad_train.labels, net_spec,
                                        base.layout);
  }

  nlohmann::json meta{{"config_hash", config_hash(cfg)},
                      {"seed", cfg.seed},
                      {"epochs", net_spec.epochs},
                      {"frozen_features", !grads_path.empty()}};
  save_gradnet(out_model, trained.model, fc, base_hash, meta);

  if (!metrics_csv.empty()) {
    std::ofstream csv = open_out(metrics_csv);
    for (const std::string &line : provenance(cfg)) csv << "# " << line << "\n";
    csv << "epoch,split,accuracy,loss\n";
    char row[128];
    for (const EpochMetrics &m : trained.trace) {
      std::snprintf(row, sizeof row, "%d,train,%.17g,%.17g\n", m.epoch, m.train_acc,
                    m.train_loss);
      csv << row;
    }
  }
  return {out_model, metrics_csv, trained.trace};
}

// ---- eval ------------------------------------------------------------------

EvalResult run_eval(const ExperimentConfig &cfg, const std::string &base_checkpoint,
                    const std::string &gradnet_checkpoint,
                    const std::string &out_prefix) {
  const MlpCheckpoint base = load_mlp(base_checkpoint);
  const std::string base_hash = file_hash_hex(base_checkpoint);
  const GradnetCheckpoint gn = load_gradnet(gradnet_checkpoint);
  if (gn.base_hash != base_hash)
    throw DataError("classifier checkpoint " + gradnet_checkpoint +
                    " was trained against base hash " + gn.base_hash + " but " +
                    base_checkpoint + " hashes to " + base_hash + "; refusing to run");

  const ResolvedData data = resolve_data(cfg);
  EvalResult result;
  result.count = data.test.size();
  result.base_accuracy =
      accuracy(base.spec, base.layout, base.params, data.test.all(), cfg.threads);
  const EvalMetrics gm = evaluate_gradnet(base.spec, base.layout, base.params,
                                          gn.model, gn.fc, data.test, cfg.threads);
  result.gradnet_accuracy = gm.accuracy;
  result.gain = result.base_accuracy > 0.0
                    ? result.gradnet_accuracy / result.base_accuracy - 1.0
                    : 0.0;

  result.json_path = out_prefix + ".json";
  result.csv_path = out_prefix + ".csv";
  nlohmann::json j{{"base_accuracy", result.base_accuracy},
                   {"gradnet_accuracy", result.gradnet_accuracy},
                   {"gain", result.gain},
                   {"gain_str", format_gain(result.gain)},
                   {"count", result.count},
                   {"config_hash", config_hash(cfg)},
                   {"seed", cfg.seed}};
  open_out(result.json_path) << j.dump(2) << "\n";
  {
    std::ofstream csv = open_out(result.csv_path);
    for (const std::string &line : provenance(cfg)) csv << "# " << line << "\n";
    csv << "base_accuracy,gradnet_accuracy,gain\n";
    char row[128];
    std::snprintf(row, sizeof row, "%.17g,%.17g,%.17g\n", result.base_accuracy,
                  result.gradnet_accuracy, result.gain);
    csv << row;
  }
  std::cerr << "  original  improved  gain\n";
  char line[96];
  std::snprintf(line, sizeof line, "  %.4f    %.4f    %s\n", result.base_accuracy,
                result.gradnet_accuracy, format_gain(result.gain).c_str());
  std::cerr << line;
  return result;
}

// ---- rbm -------------------------------------------------------------------

namespace {

/// Multinomial logistic regression by SGD over streamed features. feature_fn
/// fills `out` with the feature vector of sample i.
double linear_probe_accuracy(
    const std::function<void(std::size_t, std::span<double>)> &train_feature,
    const std::vector<int> &train_labels, std::size_t train_count,
    const std::function<void(std::size_t, std::span<double>)> &test_feature,
    const std::vector<int> &test_labels, std::size_t test_count, int dim,
    int classes, int epochs, double lr, int batch_size, std::uint64_t seed,
    int threads) {
  NetworkSpec spec;
  spec.input_dim = dim;
  spec.num_classes = classes;
  spec.seed = seed;
  const ParamLayout layout = ParamLayout::from_spec(spec);
  ParamVector params = init_params(spec);

  Rng rng(seed ^ 0x11ea51ull);
  std::vector<std::size_t> order(train_count);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> grad(layout.total);
  const std::size_t B = static_cast<std::size_t>(batch_size);

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t at = 0; at < train_count; at += B) {
      const std::size_t bsz = std::min(B, train_count - at);
      SampleBatch batch;
      batch.inputs = Matrix(bsz, dim);
      batch.labels.resize(bsz);
      parallel_for(bsz, threads, [&](std::size_t s) {
        train_feature(order[at + s], batch.inputs.row_span(s));
      });
      for (std::size_t s = 0; s < bsz; ++s) batch.labels[s] = train_labels[order[at + s]];
      mean_gradient(spec, layout, params, batch, grad, threads);
      sgd_step(params, grad, lr);
    }
  }

  // Streamed evaluation in fixed-size chunks.
  const std::size_t chunk = 256;
  const std::size_t nchunks = (test_count + chunk - 1) / chunk;
  std::vector<std::size_t> hits(nchunks, 0);
  parallel_for(nchunks, threads, [&](std::size_t ci) {
    const std::size_t lo = ci * chunk, hi = std::min(test_count, lo + chunk);
    Matrix feats(hi - lo, dim);
    for (std::size_t i = lo; i < hi; ++i) test_feature(i, feats.row_span(i - lo));
    const Matrix probs = forward(spec, layout, params, feats);
    const std::vector<int> pred = predict_classes(probs);
    std::size_t h = 0;
    for (std::size_t i = lo; i < hi; ++i)
      if (pred[i - lo] == test_labels[i]) ++h;
    hits[ci] = h;
  });
  std::size_t total = 0;
  for (std::size_t h : hits) total += h;
  return static_cast<double>(total) / static_cast<double>(test_count);
}

}  // namespace

RbmResult run_rbm(const ExperimentConfig &cfg) {
  ensure_dir(cfg.out_dir);
  const ResolvedData data = resolve_data(cfg);
  const Dataset train = binarize(data.base_train, cfg.rbm.binarize_threshold);
  const Dataset test = binarize(data.test, cfg.rbm.binarize_threshold);
  const int classes = train.meta.num_classes;
  const std::size_t d = static_cast<std::size_t>(train.meta.dim);
  const std::size_t m = static_cast<std::size_t>(cfg.rbm.hidden);

  RbmModel model = init_rbm(d, m, cfg.rbm.init_scale, cfg.seed);
  Rng rng(cfg.seed ^ 0x12b3ull);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t B = static_cast<std::size_t>(cfg.rbm.batch_size);
  for (int epoch = 1; epoch <= cfg.rbm.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t at = 0; at < order.size(); at += B) {
      const std::size_t bsz = std::min(B, order.size() - at);
      std::vector<std::size_t> idx(order.begin() + at, order.begin() + at + bsz);
      const SampleBatch batch = train.batch(idx);
      cd_k_update(model, batch.inputs, cfg.rbm.cd_k, cfg.rbm.lr, rng);
    }
  }

  const FisherDiagonal fisher = fit_fisher_diagonal(model, train.inputs);

  const auto hidden_feature = [&](const Dataset &ds) {
    return [&model, &ds](std::size_t i, std::span<double> out) {
      const std::vector<double> h = hidden_expectation(model, ds.inputs.row_span(i));
      std::copy(h.begin(), h.end(), out.begin());
    };
  };
  const auto tangent_feature = [&](const Dataset &ds) {
    return [&model, &fisher, &ds](std::size_t i, std::span<double> out) {
      const std::vector<double> f =
          normalized_tangent_feature(model, fisher, ds.inputs.row_span(i));
      std::copy(f.begin(), f.end(), out.begin());
    };
  };

  RbmResult result;
  result.original_accuracy = linear_probe_accuracy(
      hidden_feature(train), train.labels, train.size(), hidden_feature(test),
      test.labels, test.size(), static_cast<int>(m), classes,
      cfg.rbm.classifier_epochs, cfg.rbm.classifier_lr, 32, cfg.seed, cfg.threads);
  result.improved_accuracy = linear_probe_accuracy(
      tangent_feature(train), train.labels, train.size(), tangent_feature(test),
      test.labels, test.size(), static_cast<int>(model.param_count()), classes,
      cfg.rbm.classifier_epochs, cfg.rbm.classifier_lr, 32, cfg.seed, cfg.threads);

  result.model_path = cfg.out_dir + "/rbm.grdn";
  Container c;
  c.kind = "rbm";
  c.header["visible"] = d;
  c.header["hidden"] = m;
  c.header["meta"] = {{"config_hash", config_hash(cfg)},
                      {"seed", cfg.seed},
                      {"cd_k", cfg.rbm.cd_k},
                      {"epochs", cfg.rbm.epochs}};
  c.payload = model.visible_bias;
  c.payload.insert(c.payload.end(), model.hidden_bias.begin(), model.hidden_bias.end());
  c.payload.insert(c.payload.end(), model.coupling.data.begin(), model.coupling.data.end());
  save_container(result.model_path, c);

  result.json_path = cfg.out_dir + "/rbm.json";
  nlohmann::json j{{"original_accuracy", result.original_accuracy},
                   {"improved_accuracy", result.improved_accuracy},
                   {"hidden", m},
                   {"config_hash", config_hash(cfg)},
                   {"seed", cfg.seed}};
  open_out(result.json_path) << j.dump(2) << "\n";
  {
    std::ofstream csv = open_out(cfg.out_dir + "/rbm.csv");
    for (const std::string &line : provenance(cfg)) csv << "# " << line << "\n";
    csv << "hidden,original,improved\n";
    char row[96];
    std::snprintf(row, sizeof row, "%zu,%.17g,%.17g\n", m, result.original_accuracy,
                  result.improved_accuracy);
    csv << row;
  }
  std::cerr << "  #hidden  original  improved\n";
  char line[96];
  std::snprintf(line, sizeof line, "  %-8zu %.4f    %.4f\n", m,
                result.original_accuracy, result.improved_accuracy);
  std::cerr << line;
  return result;
}

// ---- kernel-check ------------------------------------------------------------

KernelCheckResult run_kernel_check(const ExperimentConfig &cfg,
                                   const std::string &out_json) {
  const KernelCheckConfig &kc = cfg.kernel_check;

  // Gram symmetry + PSD on gradients of a tiny network.
  NetworkSpec spec;
  spec.input_dim = kc.input_dim;
  spec.hidden_dims = kc.hidden_dims;
  spec.num_classes = kc.num_classes;
  spec.seed = cfg.seed;
  const ParamLayout layout = ParamLayout::from_spec(spec);
  if (layout.total > 64)
    throw ConfigError("kernel-check network must have at most 64 parameters");
  const ParamVector params = init_params(spec);
  const Dataset blobs = synth_blobs(kc.num_classes, kc.input_dim,
                                    std::max(1, kc.num_grads / kc.num_classes + 1),
                                    6.0, cfg.seed ^ 0xb10b5ull);
  std::vector<std::vector<double>> grads;
  const SampleBatch batch = blobs.all();
  for (std::size_t i = 0; i < std::min<std::size_t>(batch.size(), kc.num_grads); ++i) {
    std::vector<double> g(layout.total);
    per_sample_gradient(spec, layout, params, batch.inputs.row_span(i),
                        batch.labels[i], g);
    grads.push_back(std::move(g));
  }

  // Softmax gradients never span (their output-bias block sums to zero), so
  // the production ridge is applied; the trace comes from a diagonal build.
  const MetricState diag = build_metric(grads, nullptr, MetricMode::diagonal, 0.0);
  const MetricState metric =
      build_metric(grads, nullptr, MetricMode::full, default_ridge(diag));

  double symmetry_err = 0.0;
  Matrix gram(grads.size(), grads.size());
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (std::size_t j = 0; j < grads.size(); ++j)
      gram(i, j) = kernel(metric, grads[i], grads[j]);
  for (std::size_t i = 0; i < grads.size(); ++i)
    for (std::size_t j = i + 1; j < grads.size(); ++j)
      symmetry_err = std::max(symmetry_err, std::abs(gram(i, j) - gram(j, i)));
  const std::vector<double> eig = symmetric_eigenvalues(gram);
  double gram_trace = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) gram_trace += gram(i, i);
  const double gram_min_eig = eig.front();
  const bool psd_ok = gram_min_eig >= -1e-8 * gram_trace;
  const bool symmetry_ok = symmetry_err <= 1e-10;

  // Reparametrization invariance on a spanning random tangent set, zero
  // ridge. Cross-entropy gradients of a softmax network cannot span (their
  // output-bias block always sums to zero), so the spanning set is drawn
  // directly in the tangent space.
  const std::size_t n = layout.total;
  Rng rng(cfg.seed ^ 0x1e4a11ull);
  std::vector<std::vector<double>> tangent(kc.num_grads, std::vector<double>(n));
  for (auto &g : tangent)
    for (double &x : g) x = rng.normal();
  const MetricState mt = build_metric(tangent, nullptr, MetricMode::full, 0.0);
  Matrix k0(tangent.size(), tangent.size());
  for (std::size_t i = 0; i < tangent.size(); ++i)
    for (std::size_t j = 0; j < tangent.size(); ++j)
      k0(i, j) = kernel(mt, tangent[i], tangent[j]);

  double identity_err = 0.0;
  {
    Reparametrization ident;
    ident.jacobian = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) ident.jacobian(i, i) = 1.0;
    const auto same = apply_reparametrization(tangent, ident);
    const MetricState mi = build_metric(same, nullptr, MetricMode::full, 0.0);
    for (std::size_t i = 0; i < same.size(); ++i)
      for (std::size_t j = 0; j < same.size(); ++j)
        identity_err = std::max(identity_err,
                                std::abs(kernel(mi, same[i], same[j]) - k0(i, j)));
  }

  double invariance_err = 0.0;
  for (int rep = 0; rep < kc.reparams; ++rep) {
    Reparametrization r{random_well_conditioned(n, rng)};
    const auto mapped = apply_reparametrization(tangent, r);
    const MetricState mm = build_metric(mapped, nullptr, MetricMode::full, 0.0);
    for (std::size_t i = 0; i < mapped.size(); ++i) {
      for (std::size_t j = 0; j < mapped.size(); ++j) {
        const double kv = kernel(mm, mapped[i], mapped[j]);
        const double rel = std::abs(kv - k0(i, j)) / std::max(std::abs(k0(i, j)), 1e-12);
        invariance_err = std::max(invariance_err, rel);
      }
    }
  }
  const bool invariance_ok = invariance_err <= 1e-8 && identity_err == 0.0;

  KernelCheckResult result;
  result.pass = psd_ok && symmetry_ok && invariance_ok;
  result.report = nlohmann::json{{"n", n},
                                 {"num_grads", grads.size()},
                                 {"metric", metric_diagnostics(metric)},
                                 {"gram_min_eig", gram_min_eig},
                                 {"gram_trace", gram_trace},
                                 {"psd_ok", psd_ok},
                                 {"symmetry_max_abs_err", symmetry_err},
                                 {"symmetry_ok", symmetry_ok},
                                 {"identity_max_abs_err", identity_err},
                                 {"invariance_max_rel_err", invariance_err},
                                 {"invariance_ok", invariance_ok},
                                 {"pass", result.pass},
                                 {"config_hash", config_hash(cfg)},
                                 {"seed", cfg.seed}};
  std::cout << result.report.dump(2) << "\n";
  if (!out_json.empty()) open_out(out_json) << result.report.dump(2) << "\n";
  return result;
}

// ---- gradgraph ----------------------------------------------------------------

GradGraphResult run_gradgraph(const ExperimentConfig &cfg,
                              const std::string &base_checkpoint,
                              const std::string &out_dot) {
  const MlpCheckpoint base = load_mlp(base_checkpoint);
  const ResolvedData data = resolve_data(cfg);
  if (cfg.gradgraph.sample >= data.grad_train.size())
    throw ConfigError("gradgraph.sample is out of range");
  const std::size_t s = cfg.gradgraph.sample;

  GradGraphResult result;
  result.graph = build_grad_graph(base.spec, base.layout, base.params,
                                  data.grad_train.inputs.row_span(s),
                                  data.grad_train.labels[s], cfg.gradgraph.alpha,
                                  cfg.gradgraph.q);
  std::vector<std::string> comments = provenance(cfg);
  comments.push_back("alpha=" + std::to_string(cfg.gradgraph.alpha));
  comments.push_back("sample=" + std::to_string(s));
  result.dot_path = out_dot;
  open_out(out_dot) << export_dot(result.graph, comments);
  return result;
}

}  // namespace grdn
