// grdn/gradnet.cpp

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

#include "grdn/gradnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "grdn/checkpoint.hpp"
#include "grdn/errors.hpp"
#include "grdn/parallel.hpp"
#include "grdn/rng.hpp"

namespace grdn {

namespace {
constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;
}  // namespace

std::vector<BlockRange> input_partition(const ParamLayout &base_layout,
                                        Wiring wiring, std::size_t num_blocks) {
  const std::size_t nlayers = base_layout.layers.size();
  if (num_blocks != nlayers)
    throw ConfigError("gradnet needs one block per base layer: got " +
                      std::to_string(num_blocks) + " blocks for " +
                      std::to_string(nlayers) + " layers");
  std::vector<BlockRange> part(nlayers);
  for (std::size_t i = 0; i < nlayers; ++i) {
    part[i].lo = base_layout.layers[i].begin;
    const std::size_t j =
        wiring == Wiring::adjacent_pair ? std::min(i + 1, nlayers - 1) : i;
    part[i].hi = base_layout.layers[j].end;
  }
  return part;
}

std::size_t GradNetModel::hidden_dim() const {
  std::size_t h = 0;
  for (const Matrix &w : block_w) h += w.rows;
  return h;
}

GradNetModel init_gradnet(const GradNetSpec &spec, const ParamLayout &base_layout) {
  if (spec.num_classes < 1) throw ConfigError("gradnet: num_classes must be >= 1");
  for (int b : spec.block_sizes)
    if (b < 1) throw ConfigError("gradnet: block sizes must be >= 1");
  if (spec.dropout_p < 0.0 || spec.dropout_p >= 1.0)
    throw ConfigError("gradnet: dropout_p must be in [0, 1)");

  GradNetModel model;
  model.spec = spec;
  model.partition = input_partition(base_layout, spec.wiring, spec.block_sizes.size());

  Rng rng(spec.seed);
  for (std::size_t i = 0; i < spec.block_sizes.size(); ++i) {
    const std::size_t units = static_cast<std::size_t>(spec.block_sizes[i]);
    const std::size_t len = model.partition[i].len();
    Matrix w(units, len);
    const double bound = 1.0 / std::sqrt(static_cast<double>(len));
    for (double &x : w.data) x = rng.uniform(-bound, bound);
    model.block_w.push_back(std::move(w));
    model.block_b.emplace_back(units, 0.0);
  }
  const std::size_t hidden = model.hidden_dim();
  model.out_w = Matrix(spec.num_classes, hidden);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double &x : model.out_w.data) x = rng.uniform(-bound, bound);
  model.out_b.assign(spec.num_classes, 0.0);
  if (spec.use_batchnorm) {
    model.bn_gamma.assign(hidden, 1.0);
    model.bn_beta.assign(hidden, 0.0);
    model.bn_mean.assign(hidden, 0.0);
    model.bn_var.assign(hidden, 1.0);
  }
  return model;
}

// Block pre-activations for one sparse feature, written at `out` (length
// hidden_dim). Absent coordinates contribute nothing.
static void block_preactivations(const GradNetModel &model, const GradFeature &f,
                                 double *out) {
  std::size_t offset = 0;
  for (std::size_t b = 0; b < model.block_w.size(); ++b) {
    const Matrix &w = model.block_w[b];
    const BlockRange &r = model.partition[b];
    double *pre = out + offset;
    for (std::size_t u = 0; u < w.rows; ++u) pre[u] = model.block_b[b][u];
    const auto lo = std::lower_bound(f.indices.begin(), f.indices.end(),
                                     static_cast<std::uint32_t>(r.lo));
    const auto hi = std::lower_bound(f.indices.begin(), f.indices.end(),
                                     static_cast<std::uint32_t>(r.hi));
    for (auto it = lo; it != hi; ++it) {
      const std::size_t col = *it - r.lo;
      const double v = f.values[it - f.indices.begin()];
      for (std::size_t u = 0; u < w.rows; ++u) pre[u] += w(u, col) * v;
    }
    offset += w.rows;
  }
}

static void softmax_inplace(std::vector<double> &v) {
  double mx = v[0];
  for (double x : v) mx = std::max(mx, x);
  double sum = 0.0;
  for (double &x : v) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double &x : v) x /= sum;
}

std::vector<double> gradnet_forward(const GradNetModel &model,
                                    const GradFeature &feature) {
  std::size_t need = 0;
  for (const BlockRange &r : model.partition) need = std::max(need, r.hi);
  if (feature.dense_len < need)
    throw ConfigError("gradnet_forward: feature dense length " +
                      std::to_string(feature.dense_len) +
                      " is smaller than the input partition");
  const std::size_t hidden = model.hidden_dim();
  std::vector<double> h(hidden);
  block_preactivations(model, feature, h.data());
  if (model.spec.use_batchnorm) {
    for (std::size_t j = 0; j < hidden; ++j)
      h[j] = model.bn_gamma[j] * (h[j] - model.bn_mean[j]) /
                 std::sqrt(model.bn_var[j] + kBnEps) +
             model.bn_beta[j];
  }
  for (double &x : h) x = x > 0.0 ? x : 0.0;
  std::vector<double> logits(model.spec.num_classes);
  for (int c = 0; c < model.spec.num_classes; ++c)
    logits[c] = model.out_b[c] + dot(model.out_w.row_span(c), h);
  softmax_inplace(logits);
  return logits;
}

// ---- training ---------------------------------------------------------------

namespace {

// Gradient accumulators (and Adam moments) shaped like the model.
struct GnTensors {
  std::vector<Matrix> block_w;
  std::vector<std::vector<double>> block_b;
  Matrix out_w;
  std::vector<double> out_b;
  std::vector<double> bn_gamma, bn_beta;

  static GnTensors like(const GradNetModel &m) {
    GnTensors t;
    for (const Matrix &w : m.block_w) t.block_w.emplace_back(w.rows, w.cols);
    for (const auto &b : m.block_b) t.block_b.emplace_back(b.size(), 0.0);
    t.out_w = Matrix(m.out_w.rows, m.out_w.cols);
    t.out_b.assign(m.out_b.size(), 0.0);
    t.bn_gamma.assign(m.bn_gamma.size(), 0.0);
    t.bn_beta.assign(m.bn_beta.size(), 0.0);
    return t;
  }

  void zero() {
    for (Matrix &w : block_w) std::fill(w.data.begin(), w.data.end(), 0.0);
    for (auto &b : block_b) std::fill(b.begin(), b.end(), 0.0);
    std::fill(out_w.data.begin(), out_w.data.end(), 0.0);
    std::fill(out_b.begin(), out_b.end(), 0.0);
    std::fill(bn_gamma.begin(), bn_gamma.end(), 0.0);
    std::fill(bn_beta.begin(), bn_beta.end(), 0.0);
  }
};

template <typename Fn>
void for_each_tensor(GradNetModel &m, GnTensors &g, Fn fn) {
  for (std::size_t i = 0; i < m.block_w.size(); ++i) {
    fn(m.block_w[i].data, g.block_w[i].data);
    fn(m.block_b[i], g.block_b[i]);
  }
  fn(m.out_w.data, g.out_w.data);
  fn(m.out_b, g.out_b);
  if (m.spec.use_batchnorm) {
    fn(m.bn_gamma, g.bn_gamma);
    fn(m.bn_beta, g.bn_beta);
  }
}

struct GnOptimizer {
  OptKind kind = OptKind::sgd;
  double lr = 0.01;
  GnTensors m, v;
  std::int64_t t = 0;
  bool inited = false;

  void step(GradNetModel &model, GnTensors &grads) {
    if (kind == OptKind::sgd) {
      for_each_tensor(model, grads, [&](std::vector<double> &p, std::vector<double> &g) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
      });
      return;
    }
    if (!inited) {
      m = GnTensors::like(model);
      v = GnTensors::like(model);
      inited = true;
    }
    t += 1;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    std::size_t tensor = 0;
    std::vector<std::vector<double> *> ms, vs;
    for_each_tensor(model, m, [&](std::vector<double> &p, std::vector<double> &mm) {
      (void)p;
      ms.push_back(&mm);
    });
    for_each_tensor(model, v, [&](std::vector<double> &p, std::vector<double> &vv) {
      (void)p;
      vs.push_back(&vv);
    });
    for_each_tensor(model, grads, [&](std::vector<double> &p, std::vector<double> &g) {
      std::vector<double> &mm = *ms[tensor];
      std::vector<double> &vv = *vs[tensor];
      for (std::size_t i = 0; i < p.size(); ++i) {
        mm[i] = b1 * mm[i] + (1.0 - b1) * g[i];
        vv[i] = b2 * vv[i] + (1.0 - b2) * g[i] * g[i];
        p[i] -= lr * (mm[i] / bc1) / (std::sqrt(vv[i] / bc2) + eps);
      }
      ++tensor;
    });
  }
};

struct BatchResult {
  double loss_sum = 0.0;
  std::size_t correct = 0;
};

// One optimizer step on a batch of features against true labels. Gradients
// are for the mean cross-entropy over the batch.
BatchResult train_batch(GradNetModel &model, const std::vector<GradFeature> &feats,
                        const std::vector<int> &targets, GnTensors &grads,
                        GnOptimizer &opt, Rng &rng) {
  const std::size_t B = feats.size();
  const std::size_t H = model.hidden_dim();
  const int C = model.spec.num_classes;
  const bool bn = model.spec.use_batchnorm;
  const double drop = model.spec.dropout_p;

  Matrix pre(B, H), y(B, H), h(B, H), xhat;
  Matrix dropmask;
  std::vector<double> mu, var;
  for (std::size_t s = 0; s < B; ++s) block_preactivations(model, feats[s], pre.row(s));

  if (bn) {
    mu.assign(H, 0.0);
    var.assign(H, 0.0);
    for (std::size_t s = 0; s < B; ++s)
      for (std::size_t j = 0; j < H; ++j) mu[j] += pre(s, j);
    for (double &x : mu) x /= static_cast<double>(B);
    for (std::size_t s = 0; s < B; ++s)
      for (std::size_t j = 0; j < H; ++j) {
        const double d = pre(s, j) - mu[j];
        var[j] += d * d;
      }
    for (double &x : var) x /= static_cast<double>(B);
    xhat = Matrix(B, H);
    for (std::size_t s = 0; s < B; ++s)
      for (std::size_t j = 0; j < H; ++j) {
        xhat(s, j) = (pre(s, j) - mu[j]) / std::sqrt(var[j] + kBnEps);
        y(s, j) = model.bn_gamma[j] * xhat(s, j) + model.bn_beta[j];
      }
    for (std::size_t j = 0; j < H; ++j) {
      model.bn_mean[j] = kBnMomentum * model.bn_mean[j] + (1.0 - kBnMomentum) * mu[j];
      model.bn_var[j] = kBnMomentum * model.bn_var[j] + (1.0 - kBnMomentum) * var[j];
    }
  } else {
    y = pre;
  }

  for (std::size_t i = 0; i < y.data.size(); ++i)
    h.data[i] = y.data[i] > 0.0 ? y.data[i] : 0.0;

  if (drop > 0.0) {
    dropmask = Matrix(B, H);
    const double keep = 1.0 - drop;
    for (std::size_t i = 0; i < dropmask.data.size(); ++i)
      dropmask.data[i] = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
    for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] *= dropmask.data[i];
  }

  Matrix probs(B, C);
  BatchResult result;
  for (std::size_t s = 0; s < B; ++s) {
    std::vector<double> logits(C);
    for (int c = 0; c < C; ++c)
      logits[c] = model.out_b[c] + dot(model.out_w.row_span(c), h.row_span(s));
    softmax_inplace(logits);
    std::copy(logits.begin(), logits.end(), probs.row(s));
    result.loss_sum += -std::log(std::max(logits[targets[s]], 1e-300));
    int best = 0;
    for (int c = 1; c < C; ++c)
      if (logits[c] > logits[best]) best = c;
    if (best == targets[s]) ++result.correct;
  }

  grads.zero();
  const double invB = 1.0 / static_cast<double>(B);
  Matrix dy(B, H);
  for (std::size_t s = 0; s < B; ++s) {
    std::vector<double> dlogit(probs.row(s), probs.row(s) + C);
    dlogit[targets[s]] -= 1.0;
    for (double &x : dlogit) x *= invB;
    std::vector<double> dh(H, 0.0);
    for (int c = 0; c < C; ++c) {
      axpy(dlogit[c], h.row_span(s), grads.out_w.row_span(c));
      grads.out_b[c] += dlogit[c];
      axpy(dlogit[c], model.out_w.row_span(c), dh);
    }
    if (drop > 0.0)
      for (std::size_t j = 0; j < H; ++j) dh[j] *= dropmask(s, j);
    for (std::size_t j = 0; j < H; ++j)
      dy(s, j) = y(s, j) > 0.0 ? dh[j] : 0.0;
  }

  Matrix dpre(B, H);
  if (bn) {
    // dy -> dpre through the batch statistics.
    std::vector<double> sum_dxhat(H, 0.0), sum_dxhat_xhat(H, 0.0);
    Matrix dxhat(B, H);
    for (std::size_t s = 0; s < B; ++s)
      for (std::size_t j = 0; j < H; ++j) {
        grads.bn_gamma[j] += dy(s, j) * xhat(s, j);
        grads.bn_beta[j] += dy(s, j);
        dxhat(s, j) = dy(s, j) * model.bn_gamma[j];
        sum_dxhat[j] += dxhat(s, j);
        sum_dxhat_xhat[j] += dxhat(s, j) * xhat(s, j);
      }
    for (std::size_t s = 0; s < B; ++s)
      for (std::size_t j = 0; j < H; ++j) {
        const double inv_sigma = 1.0 / std::sqrt(var[j] + kBnEps);
        dpre(s, j) = inv_sigma / static_cast<double>(B) *
                     (static_cast<double>(B) * dxhat(s, j) - sum_dxhat[j] -
                      xhat(s, j) * sum_dxhat_xhat[j]);
      }
  } else {
    dpre = dy;
  }

  for (std::size_t s = 0; s < B; ++s) {
    const GradFeature &f = feats[s];
    std::size_t offset = 0;
    for (std::size_t b = 0; b < model.block_w.size(); ++b) {
      Matrix &gw = grads.block_w[b];
      const BlockRange &r = model.partition[b];
      const double *dp = dpre.row(s) + offset;
      for (std::size_t u = 0; u < gw.rows; ++u) grads.block_b[b][u] += dp[u];
      const auto lo = std::lower_bound(f.indices.begin(), f.indices.end(),
                                       static_cast<std::uint32_t>(r.lo));
      const auto hi = std::lower_bound(f.indices.begin(), f.indices.end(),
                                       static_cast<std::uint32_t>(r.hi));
      for (auto it = lo; it != hi; ++it) {
        const std::size_t col = *it - r.lo;
        const double v = f.values[it - f.indices.begin()];
        for (std::size_t u = 0; u < gw.rows; ++u) gw(u, col) += dp[u] * v;
      }
      offset += gw.rows;
    }
  }

  opt.step(model, grads);
  return result;
}

}  // namespace

GradFeature make_feature(const FeatureConfig &fc, std::span<const double> grad,
                         std::int64_t sample_id, int hyp_label) {
  GradFeature f = percentile_sparsify(grad, fc.q, sample_id, hyp_label);
  if (fc.use_label_mask) {
    if (!fc.mask) throw UsageError("make_feature: label mask enabled but not fitted");
    f = apply_label_mask(*fc.mask, f);
  }
  return fc.pipeline.apply(std::move(f));
}

void fit_feature_config(FeatureConfig &fc, const NetworkSpec &base_spec,
                        const ParamLayout &layout, const ParamVector &params,
                        const Dataset &data, std::uint64_t seed) {
  const bool need_mask = fc.use_label_mask && !fc.mask;
  const bool need_stats = fc.pipeline.needs_stats() && !fc.pipeline.stats.fitted;
  if (!need_mask && !need_stats) return;

  const std::size_t cap = fc.fit_sample_cap == 0
                              ? data.size()
                              : std::min(fc.fit_sample_cap, data.size());
  std::vector<std::size_t> idx(cap);
  std::iota(idx.begin(), idx.end(), 0);
  const SampleBatch fit_batch = data.batch(idx);

  if (need_mask) {
    // Per-label importance over all hypothesized labels so every class gets a
    // mask even when the dataset is small.
    LabelMaskAccumulator acc(static_cast<std::uint32_t>(layout.total));
    for_each_gradient(base_spec, layout, params, fit_batch, LabelMode::all_labels,
                      seed, [&](std::size_t, int hyp, std::span<const double> g) {
                        acc.add(hyp, g);
                      });
    fc.mask = acc.finish(fc.mask_keep);
  }

  if (need_stats) {
    // Statistics over the sparsified training stream (random hypothesized
    // labels), matching what the classifier will see.
    fc.pipeline.stats.init(static_cast<std::uint32_t>(layout.total));
    for_each_gradient(base_spec, layout, params, fit_batch,
                      LabelMode::random_labels, seed ^ 0x9e3779b97f4a7c15ull,
                      [&](std::size_t s, int hyp, std::span<const double> g) {
                        GradFeature f = percentile_sparsify(g, fc.q,
                                                            static_cast<std::int64_t>(s), hyp);
                        if (fc.use_label_mask) f = apply_label_mask(*fc.mask, f);
                        fc.pipeline.stats.add(f);
                      });
  }
}

TrainResult train_gradnet(const NetworkSpec &base_spec, const ParamLayout &layout,
                          const ParamVector &base_params, const Dataset &data,
                          const GradNetSpec &net_spec, FeatureConfig fc,
                          int threads) {
  if (data.size() == 0) throw UsageError("train_gradnet: empty dataset");
  if (data.labels.size() != data.size())
    throw UsageError("train_gradnet: dataset must be labeled");

  fit_feature_config(fc, base_spec, layout, base_params, data, net_spec.seed);

  TrainResult result;
  result.model = init_gradnet(net_spec, layout);
  GnTensors grads = GnTensors::like(result.model);
  GnOptimizer opt;
  opt.kind = net_spec.optimizer;
  opt.lr = net_spec.lr;

  Rng rng(net_spec.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t B = static_cast<std::size_t>(net_spec.batch_size);
  for (int epoch = 1; epoch <= net_spec.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0;
    for (std::size_t at = 0; at < order.size(); at += B) {
      const std::size_t bsz = std::min(B, order.size() - at);
      const std::size_t batch_index = at / B;

      // Sequential draws keep the stream independent of the thread count.
      std::vector<int> hyp(bsz), targets(bsz);
      std::vector<std::vector<double>> inputs(bsz);
      for (std::size_t s = 0; s < bsz; ++s) {
        const std::size_t row = order[at + s];
        targets[s] = data.labels[row];
        hyp[s] = rng.uniform_int(base_spec.num_classes);
        inputs[s].assign(data.inputs.row(row), data.inputs.row(row) + data.inputs.cols);
        if (fc.jitter_sigma > 0.0) {
          for (double &x : inputs[s])
            x = std::clamp(x + fc.jitter_sigma * rng.normal(), 0.0, 1.0);
        }
      }

      std::vector<GradFeature> feats(bsz);
      parallel_for(bsz, threads, [&](std::size_t s) {
        std::vector<double> g(layout.total);
        per_sample_gradient(base_spec, layout, base_params, inputs[s], hyp[s], g);
        feats[s] = make_feature(fc, g, static_cast<std::int64_t>(order[at + s]), hyp[s]);
      });

      const BatchResult br = train_batch(result.model, feats, targets, grads, opt, rng);
      if (!std::isfinite(br.loss_sum))
        throw NumericError("train_gradnet: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      loss_sum += br.loss_sum;
      correct += br.correct;
      seen += bsz;
    }
    result.trace.push_back({epoch, loss_sum / static_cast<double>(seen),
                            static_cast<double>(correct) / static_cast<double>(seen)});
  }
  return result;
}

TrainResult train_gradnet_on_features(const std::vector<GradFeature> &features,
                                      const std::vector<int> &labels,
                                      const GradNetSpec &net_spec,
                                      const ParamLayout &base_layout) {
  if (features.empty()) throw UsageError("train_gradnet_on_features: no features");
  TrainResult result;
  result.model = init_gradnet(net_spec, base_layout);
  GnTensors grads = GnTensors::like(result.model);
  GnOptimizer opt;
  opt.kind = net_spec.optimizer;
  opt.lr = net_spec.lr;
  Rng rng(net_spec.seed);

  const std::size_t B = static_cast<std::size_t>(net_spec.batch_size);
  for (int epoch = 1; epoch <= net_spec.epochs; ++epoch) {
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t at = 0; at < features.size(); at += B) {
      const std::size_t bsz = std::min(B, features.size() - at);
      std::vector<GradFeature> feats(features.begin() + at, features.begin() + at + bsz);
      std::vector<int> targets(bsz);
      for (std::size_t s = 0; s < bsz; ++s) {
        const std::size_t id = static_cast<std::size_t>(feats[s].sample_id);
        if (id >= labels.size())
          throw UsageError("train_gradnet_on_features: sample_id out of range");
        targets[s] = labels[id];
      }
      const BatchResult br = train_batch(result.model, feats, targets, grads, opt, rng);
      if (!std::isfinite(br.loss_sum))
        throw NumericError("train_gradnet_on_features: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(at / B));
      loss_sum += br.loss_sum;
      correct += br.correct;
    }
    result.trace.push_back({epoch, loss_sum / static_cast<double>(features.size()),
                            static_cast<double>(correct) /
                                static_cast<double>(features.size())});
  }
  return result;
}

int gradnet_predict(const NetworkSpec &base_spec, const ParamLayout &layout,
                    const ParamVector &base_params, const GradNetModel &model,
                    const FeatureConfig &fc, std::span<const double> x) {
  const int C = base_spec.num_classes;
  std::vector<double> sum(model.spec.num_classes, 0.0);
  std::vector<double> g(layout.total);
  WorkBuffers wb;
  for (int hyp = 0; hyp < C; ++hyp) {
    per_sample_gradient(base_spec, layout, base_params, x, hyp, g, &wb);
    const GradFeature f = make_feature(fc, g, 0, hyp);
    const std::vector<double> p = gradnet_forward(model, f);
    for (std::size_t c = 0; c < sum.size(); ++c) sum[c] += p[c];
  }
  int best = 0;
  for (std::size_t c = 1; c < sum.size(); ++c)
    if (sum[c] > sum[best]) best = static_cast<int>(c);
  return best;
}

EvalMetrics evaluate_gradnet(const NetworkSpec &base_spec, const ParamLayout &layout,
                             const ParamVector &base_params, const GradNetModel &model,
                             const FeatureConfig &fc, const Dataset &test,
                             int threads) {
  if (test.size() == 0) throw UsageError("evaluate_gradnet: empty test set");
  const int C = model.spec.num_classes;
  std::vector<int> pred(test.size());
  parallel_for(test.size(), threads, [&](std::size_t i) {
    pred[i] = gradnet_predict(base_spec, layout, base_params, model, fc,
                              test.inputs.row_span(i));
  });

  EvalMetrics m;
  m.count = test.size();
  m.confusion = Matrix(C, C);
  std::vector<std::size_t> class_count(C, 0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const int t = test.labels[i];
    m.confusion(t, pred[i]) += 1.0;
    ++class_count[t];
    if (pred[i] == t) ++hits;
  }
  m.accuracy = static_cast<double>(hits) / static_cast<double>(test.size());
  m.per_class.assign(C, 0.0);
  for (int c = 0; c < C; ++c)
    if (class_count[c] > 0)
      m.per_class[c] = m.confusion(c, c) / static_cast<double>(class_count[c]);
  return m;
}

// ---- checkpointing -----------------------------------------------------------

static nlohmann::json spec_to_json(const GradNetSpec &s) {
  return nlohmann::json{
      {"block_sizes", s.block_sizes},
      {"wiring", s.wiring == Wiring::adjacent_pair ? "adjacent_pair" : "single_layer"},
      {"num_classes", s.num_classes},
      {"dropout_p", s.dropout_p},
      {"batchnorm", s.use_batchnorm},
      {"optimizer", s.optimizer == OptKind::sgd ? "sgd" : "adam"},
      {"lr", s.lr},
      {"epochs", s.epochs},
      {"batch_size", s.batch_size},
      {"seed", s.seed}};
}

static GradNetSpec spec_from_json(const nlohmann::json &j) {
  GradNetSpec s;
  s.block_sizes = j.at("block_sizes").get<std::vector<int>>();
  s.wiring = j.at("wiring").get<std::string>() == "single_layer"
                 ? Wiring::single_layer
                 : Wiring::adjacent_pair;
  s.num_classes = j.at("num_classes").get<int>();
  s.dropout_p = j.at("dropout_p").get<double>();
  s.use_batchnorm = j.at("batchnorm").get<bool>();
  s.optimizer = j.at("optimizer").get<std::string>() == "adam" ? OptKind::adam
                                                               : OptKind::sgd;
  s.lr = j.at("lr").get<double>();
  s.epochs = j.at("epochs").get<int>();
  s.batch_size = j.at("batch_size").get<int>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

void save_gradnet(const std::string &path, const GradNetModel &model,
                  const FeatureConfig &fc, const std::string &base_hash,
                  const nlohmann::json &meta) {
  Container c;
  c.kind = "gradnet";
  c.header["spec"] = spec_to_json(model.spec);
  nlohmann::json part = nlohmann::json::array();
  for (const BlockRange &r : model.partition) part.push_back({r.lo, r.hi});
  c.header["partition"] = part;
  c.header["base_hash"] = base_hash;
  c.header["features"] = {
      {"q", fc.q},
      {"norm", fc.pipeline.tags()},
      {"use_label_mask", fc.use_label_mask},
      {"mask_keep", fc.mask_keep},
      {"jitter_sigma", fc.jitter_sigma},
      {"has_stats", fc.pipeline.stats.fitted}};
  if (fc.use_label_mask && fc.mask) {
    nlohmann::json masks = nlohmann::json::object();
    for (const auto &[label, idx] : fc.mask->masks)
      masks[std::to_string(label)] = idx;
    c.header["features"]["mask_dense_len"] = fc.mask->dense_len;
    c.header["features"]["masks"] = masks;
  }
  if (!meta.is_null() && !meta.empty()) c.header["meta"] = meta;

  for (std::size_t b = 0; b < model.block_w.size(); ++b) {
    c.payload.insert(c.payload.end(), model.block_w[b].data.begin(),
                     model.block_w[b].data.end());
    c.payload.insert(c.payload.end(), model.block_b[b].begin(), model.block_b[b].end());
  }
  c.payload.insert(c.payload.end(), model.out_w.data.begin(), model.out_w.data.end());
  c.payload.insert(c.payload.end(), model.out_b.begin(), model.out_b.end());
  if (model.spec.use_batchnorm) {
    c.payload.insert(c.payload.end(), model.bn_gamma.begin(), model.bn_gamma.end());
    c.payload.insert(c.payload.end(), model.bn_beta.begin(), model.bn_beta.end());
    c.payload.insert(c.payload.end(), model.bn_mean.begin(), model.bn_mean.end());
    c.payload.insert(c.payload.end(), model.bn_var.begin(), model.bn_var.end());
  }
  if (fc.pipeline.stats.fitted) {
    const StandardStats &st = fc.pipeline.stats;
    c.payload.push_back(static_cast<double>(st.dense_len));
    for (std::int64_t n : st.count) c.payload.push_back(static_cast<double>(n));
    c.payload.insert(c.payload.end(), st.mean.begin(), st.mean.end());
    c.payload.insert(c.payload.end(), st.m2.begin(), st.m2.end());
  }
  save_container(path, c);
}

GradnetCheckpoint load_gradnet(const std::string &path) {
  Container c = load_container(path);
  if (c.kind != "gradnet")
    throw ParseError("expected a \"gradnet\" checkpoint, found kind \"" + c.kind + "\"", 12);

  GradnetCheckpoint ck;
  const GradNetSpec spec = spec_from_json(c.header.at("spec"));
  ck.base_hash = c.header.at("base_hash").get<std::string>();
  ck.meta = c.header.value("meta", nlohmann::json::object());

  GradNetModel &m = ck.model;
  m.spec = spec;
  for (const nlohmann::json &jr : c.header.at("partition"))
    m.partition.push_back({jr.at(0).get<std::size_t>(), jr.at(1).get<std::size_t>()});
  if (m.partition.size() != spec.block_sizes.size())
    throw ParseError("gradnet partition does not match block count", 12);

  std::size_t at = 0;
  auto take = [&](std::size_t count) {
    if (at + count > c.payload.size())
      throw ParseError("gradnet payload truncated", 12);
    const std::size_t from = at;
    at += count;
    return std::vector<double>(c.payload.begin() + from, c.payload.begin() + at);
  };
  for (std::size_t b = 0; b < spec.block_sizes.size(); ++b) {
    const std::size_t units = static_cast<std::size_t>(spec.block_sizes[b]);
    const std::size_t len = m.partition[b].len();
    Matrix w(units, len);
    w.data = take(units * len);
    m.block_w.push_back(std::move(w));
    m.block_b.push_back(take(units));
  }
  const std::size_t hidden = m.hidden_dim();
  m.out_w = Matrix(spec.num_classes, hidden);
  m.out_w.data = take(static_cast<std::size_t>(spec.num_classes) * hidden);
  m.out_b = take(spec.num_classes);
  if (spec.use_batchnorm) {
    m.bn_gamma = take(hidden);
    m.bn_beta = take(hidden);
    m.bn_mean = take(hidden);
    m.bn_var = take(hidden);
  }

  const nlohmann::json &jf = c.header.at("features");
  ck.fc.q = jf.at("q").get<double>();
  ck.fc.pipeline.steps = parse_norm_steps(jf.at("norm").get<std::vector<std::string>>());
  ck.fc.use_label_mask = jf.at("use_label_mask").get<bool>();
  ck.fc.mask_keep = jf.at("mask_keep").get<double>();
  ck.fc.jitter_sigma = jf.at("jitter_sigma").get<double>();
  if (ck.fc.use_label_mask && jf.contains("masks")) {
    LabelMask mask;
    mask.keep_fraction = ck.fc.mask_keep;
    mask.dense_len = jf.at("mask_dense_len").get<std::uint32_t>();
    for (const auto &[key, idx] : jf.at("masks").items())
      mask.masks[std::stoi(key)] = idx.get<std::vector<std::uint32_t>>();
    ck.fc.mask = std::move(mask);
  }
  if (jf.at("has_stats").get<bool>()) {
    StandardStats st;
    const std::vector<double> len = take(1);
    st.init(static_cast<std::uint32_t>(len[0]));
    const std::vector<double> counts = take(st.dense_len);
    for (std::size_t i = 0; i < st.dense_len; ++i)
      st.count[i] = static_cast<std::int64_t>(counts[i]);
    st.mean = take(st.dense_len);
    st.m2 = take(st.dense_len);
    ck.fc.pipeline.stats = std::move(st);
  }
  if (at != c.payload.size())
    throw ParseError("gradnet payload has trailing data", 12);
  return ck;
}

}  // namespace grdn
