// grdn/network.cpp

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

#include "grdn/network.hpp"

#include <algorithm>
#include <cmath>

#include "grdn/errors.hpp"
#include "grdn/parallel.hpp"
#include "grdn/rng.hpp"

namespace grdn {

std::vector<int> NetworkSpec::dims() const {
  std::vector<int> d;
  d.reserve(hidden_dims.size() + 2);
  d.push_back(input_dim);
  d.insert(d.end(), hidden_dims.begin(), hidden_dims.end());
  d.push_back(num_classes);
  return d;
}

void NetworkSpec::validate() const {
  for (int d : dims())
    if (d < 1) throw ConfigError("network dimensions must all be >= 1");
}

ParamLayout ParamLayout::from_spec(const NetworkSpec &spec) {
  spec.validate();
  const std::vector<int> d = spec.dims();
  ParamLayout layout;
  std::size_t at = 0;
  for (std::size_t l = 0; l + 1 < d.size(); ++l) {
    LayerRange r;
    r.layer = static_cast<int>(l);
    r.rows = static_cast<std::size_t>(d[l + 1]);
    r.cols = static_cast<std::size_t>(d[l]);
    r.bias_len = r.rows;
    r.begin = at;
    r.end = at + r.weight_count() + r.bias_len;
    at = r.end;
    layout.layers.push_back(r);
  }
  layout.total = at;
  return layout;
}

int ParamLayout::layer_of(std::size_t i) const {
  for (const LayerRange &r : layers)
    if (i >= r.begin && i < r.end) return r.layer;
  throw ConfigError("coordinate " + std::to_string(i) + " outside layout");
}

void ParamLayout::validate() const {
  std::size_t at = 0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerRange &r = layers[l];
    if (r.layer != static_cast<int>(l) || r.begin != at || r.end != r.begin + r.weight_count() + r.bias_len ||
        r.bias_len != r.rows)
      throw ConfigError("parameter layout ranges are inconsistent");
    at = r.end;
  }
  if (at != total) throw ConfigError("parameter layout does not cover [0, n)");
}

ParamVector init_params(const NetworkSpec &spec) {
  const ParamLayout layout = ParamLayout::from_spec(spec);
  ParamVector params(layout.total, 0.0);
  Rng rng(spec.seed);
  for (const LayerRange &r : layout.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(r.cols));
    for (std::size_t i = 0; i < r.weight_count(); ++i)
      params[r.begin + i] = rng.uniform(-bound, bound);
    // biases stay zero
  }
  return params;
}

static void softmax_row(double *row, std::size_t n) {
  double mx = row[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    row[i] = std::exp(row[i] - mx);
    sum += row[i];
  }
  for (std::size_t i = 0; i < n; ++i) row[i] /= sum;
}

Matrix forward(const NetworkSpec &spec, const ParamLayout &layout,
               const ParamVector &params, const Matrix &inputs) {
  spec.validate();
  if (inputs.cols != static_cast<std::size_t>(spec.input_dim))
    throw ConfigError("forward: input has " + std::to_string(inputs.cols) +
                      " columns, spec expects " + std::to_string(spec.input_dim));
  if (params.size() != layout.total)
    throw ConfigError("forward: parameter vector length mismatch");

  Matrix cur = inputs;
  const std::size_t nlayers = layout.layers.size();
  for (std::size_t l = 0; l < nlayers; ++l) {
    const LayerRange &r = layout.layers[l];
    Matrix next(cur.rows, r.rows);
    const double *w = params.data() + r.begin;
    const double *b = params.data() + r.bias_begin();
    for (std::size_t i = 0; i < cur.rows; ++i) {
      const double *in = cur.row(i);
      double *out = next.row(i);
      for (std::size_t o = 0; o < r.rows; ++o)
        out[o] = b[o] + dot({w + o * r.cols, r.cols}, {in, r.cols});
    }
    if (l + 1 < nlayers) {
      for (double &x : next.data) x = x > 0.0 ? x : 0.0;
    } else {
      for (std::size_t i = 0; i < next.rows; ++i) softmax_row(next.row(i), next.cols);
    }
    cur = std::move(next);
  }
  return cur;
}

double loss(const NetworkSpec &spec, const ParamLayout &layout,
            const ParamVector &params, const SampleBatch &batch) {
  if (!batch.has_labels()) throw UsageError("loss: batch has no labels");
  if (batch.labels.size() != batch.size())
    throw UsageError("loss: label count does not match batch size");
  const Matrix probs = forward(spec, layout, params, batch.inputs);
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const int c = batch.labels[i];
    if (c < 0 || c >= spec.num_classes) throw UsageError("loss: label out of range");
    total += -std::log(std::max(probs(i, c), 1e-300));
  }
  return total / static_cast<double>(probs.rows);
}

double per_sample_gradient(const NetworkSpec &spec, const ParamLayout &layout,
                           const ParamVector &params, std::span<const double> x,
                           int label, std::span<double> grad_out, WorkBuffers *wb) {
  if (x.size() != static_cast<std::size_t>(spec.input_dim))
    throw ConfigError("per_sample_gradient: input dimension mismatch");
  if (label < 0 || label >= spec.num_classes)
    throw UsageError("per_sample_gradient: label out of range");
  if (grad_out.size() != layout.total)
    throw ConfigError("per_sample_gradient: gradient buffer size mismatch");

  WorkBuffers local;
  WorkBuffers &w = wb ? *wb : local;
  const std::size_t nlayers = layout.layers.size();
  w.acts.resize(nlayers + 1);
  w.pre.resize(nlayers);

  w.acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < nlayers; ++l) {
    const LayerRange &r = layout.layers[l];
    const double *wt = params.data() + r.begin;
    const double *b = params.data() + r.bias_begin();
    w.pre[l].resize(r.rows);
    for (std::size_t o = 0; o < r.rows; ++o)
      w.pre[l][o] = b[o] + dot({wt + o * r.cols, r.cols},
                               {w.acts[l].data(), r.cols});
    w.acts[l + 1] = w.pre[l];
    if (l + 1 < nlayers) {
      for (double &v : w.acts[l + 1]) v = v > 0.0 ? v : 0.0;
    } else {
      softmax_row(w.acts[l + 1].data(), w.acts[l + 1].size());
    }
  }

  const double sample_loss = -std::log(std::max(w.acts[nlayers][label], 1e-300));

  // delta at the output: probs - onehot(label)
  w.delta = w.acts[nlayers];
  w.delta[label] -= 1.0;

  for (std::size_t li = nlayers; li-- > 0;) {
    const LayerRange &r = layout.layers[li];
    const double *wt = params.data() + r.begin;
    double *gw = grad_out.data() + r.begin;
    double *gb = grad_out.data() + r.bias_begin();
    const std::vector<double> &in = w.acts[li];
    for (std::size_t o = 0; o < r.rows; ++o) {
      const double d = w.delta[o];
      double *row = gw + o * r.cols;
      for (std::size_t i = 0; i < r.cols; ++i) row[i] = d * in[i];
      gb[o] = d;
    }
    if (li > 0) {
      w.delta_next.assign(r.cols, 0.0);
      for (std::size_t o = 0; o < r.rows; ++o)
        axpy(w.delta[o], {wt + o * r.cols, r.cols}, w.delta_next);
      // ReLU subgradient: strictly positive pre-activations propagate.
      const std::vector<double> &z = w.pre[li - 1];
      for (std::size_t i = 0; i < r.cols; ++i)
        if (!(z[i] > 0.0)) w.delta_next[i] = 0.0;
      std::swap(w.delta, w.delta_next);
    }
  }
  return sample_loss;
}

double mean_gradient(const NetworkSpec &spec, const ParamLayout &layout,
                   const ParamVector &params, const SampleBatch &batch,
                   std::span<double> grad_out, int threads) {
  if (!batch.has_labels()) throw UsageError("mean_gradient: batch has no labels");
  const std::size_t count = batch.size();
  if (count == 0) throw UsageError("mean_gradient: empty batch");
  const std::size_t n = layout.total;

  // Fixed 32-sample blocks reduced in block order: the sum is independent of
  // the thread count.
  const std::size_t block = 32;
  const std::size_t nblocks = (count + block - 1) / block;
  std::vector<std::vector<double>> partial(nblocks);
  std::vector<double> partial_loss(nblocks, 0.0);

  parallel_for(nblocks, threads, [&](std::size_t bi) {
    std::vector<double> &acc = partial[bi];
    acc.assign(n, 0.0);
    std::vector<double> g(n);
    WorkBuffers wb;
    const std::size_t lo = bi * block, hi = std::min(count, lo + block);
    for (std::size_t i = lo; i < hi; ++i) {
      partial_loss[bi] += per_sample_gradient(spec, layout, params,
                                              batch.inputs.row_span(i),
                                              batch.labels[i], g, &wb);
      for (std::size_t k = 0; k < n; ++k) acc[k] += g[k];
    }
  });

  std::fill(grad_out.begin(), grad_out.end(), 0.0);
  double loss_sum = 0.0;
  for (std::size_t bi = 0; bi < nblocks; ++bi) {
    loss_sum += partial_loss[bi];
    for (std::size_t k = 0; k < n; ++k) grad_out[k] += partial[bi][k];
  }
  const double inv = 1.0 / static_cast<double>(count);
  for (std::size_t k = 0; k < n; ++k) grad_out[k] *= inv;
  return loss_sum * inv;
}

void sgd_step(ParamVector &params, std::span<const double> grad, double lr) {
  if (!(lr > 0.0)) throw ConfigError("sgd_step: learning rate must be > 0");
  if (grad.size() != params.size()) throw ConfigError("sgd_step: size mismatch");
  if (!all_finite(grad)) throw NumericError("sgd_step: non-finite gradient");
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

void adam_step(ParamVector &params, std::span<const double> grad,
               AdamState &state, const AdamParams &hp) {
  if (!(hp.lr > 0.0)) throw ConfigError("adam_step: learning rate must be > 0");
  if (grad.size() != params.size()) throw ConfigError("adam_step: size mismatch");
  if (!all_finite(grad)) throw NumericError("adam_step: non-finite gradient");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
    state.t = 0;
  }
  if (state.m.size() != params.size())
    throw ConfigError("adam_step: state size mismatch");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = hp.beta1 * state.m[i] + (1.0 - hp.beta1) * grad[i];
    state.v[i] = hp.beta2 * state.v[i] + (1.0 - hp.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= hp.lr * mhat / (std::sqrt(vhat) + hp.eps);
  }
}

std::vector<int> predict_classes(const Matrix &probs) {
  std::vector<int> out(probs.rows);
  for (std::size_t i = 0; i < probs.rows; ++i) {
    const double *row = probs.row(i);
    int best = 0;
    for (std::size_t c = 1; c < probs.cols; ++c)
      if (row[c] > row[best]) best = static_cast<int>(c);
    out[i] = best;
  }
  return out;
}

double accuracy(const NetworkSpec &spec, const ParamLayout &layout,
                const ParamVector &params, const SampleBatch &batch,
                int threads) {
  if (!batch.has_labels()) throw UsageError("accuracy: batch has no labels");
  const std::size_t count = batch.size();
  const std::size_t block = 256;
  const std::size_t nblocks = (count + block - 1) / block;
  std::vector<std::size_t> hits(nblocks, 0);
  parallel_for(nblocks, threads, [&](std::size_t bi) {
    const std::size_t lo = bi * block, hi = std::min(count, lo + block);
    Matrix chunk(hi - lo, batch.inputs.cols);
    std::copy(batch.inputs.row(lo), batch.inputs.row(lo) + chunk.data.size(),
              chunk.data.begin());
    const Matrix probs = forward(spec, layout, params, chunk);
    const std::vector<int> pred = predict_classes(probs);
    std::size_t h = 0;
    for (std::size_t i = lo; i < hi; ++i)
      if (pred[i - lo] == batch.labels[i]) ++h;
    hits[bi] = h;
  });
  std::size_t total = 0;
  for (std::size_t h : hits) total += h;
  return static_cast<double>(total) / static_cast<double>(count);
}

}  // namespace grdn
