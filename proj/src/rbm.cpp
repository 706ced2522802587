// grdn/rbm.cpp

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

#include "grdn/rbm.hpp"

#include <cmath>

#include "grdn/errors.hpp"

namespace grdn {

static double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

static void check_binary(std::span<const double> v, const char *what) {
  for (double x : v)
    if (x != 0.0 && x != 1.0)
      throw UsageError(std::string(what) + ": input must be a 0/1 vector");
}

RbmModel init_rbm(std::size_t d, std::size_t m, double scale, std::uint64_t seed) {
  if (d < 1 || m < 1) throw ConfigError("init_rbm: d and m must be >= 1");
  RbmModel model;
  model.visible_bias.assign(d, 0.0);
  model.hidden_bias.assign(m, 0.0);
  model.coupling = Matrix(d, m);
  Rng rng(seed);
  for (double &w : model.coupling.data) w = rng.uniform(-scale, scale);
  return model;
}

double energy(const RbmModel &model, std::span<const double> v,
              std::span<const double> h) {
  if (v.size() != model.d() || h.size() != model.m())
    throw ConfigError("energy: dimension mismatch");
  check_binary(v, "energy");
  check_binary(h, "energy");
  double e = -dot(model.visible_bias, v) - dot(model.hidden_bias, h);
  for (std::size_t i = 0; i < model.d(); ++i) {
    if (v[i] == 0.0) continue;
    e -= dot(model.coupling.row_span(i), h);
  }
  return e;
}

std::vector<double> hidden_expectation(const RbmModel &model,
                                       std::span<const double> v) {
  std::vector<double> h(model.m());
  for (std::size_t j = 0; j < model.m(); ++j) h[j] = model.hidden_bias[j];
  for (std::size_t i = 0; i < model.d(); ++i)
    if (v[i] != 0.0) axpy(v[i], model.coupling.row_span(i), h);
  for (double &x : h) x = sigmoid(x);
  return h;
}

std::vector<double> visible_expectation(const RbmModel &model,
                                        std::span<const double> h) {
  std::vector<double> v(model.d());
  for (std::size_t i = 0; i < model.d(); ++i)
    v[i] = sigmoid(model.visible_bias[i] + dot(model.coupling.row_span(i), h));
  return v;
}

void cd_k_update(RbmModel &model, const Matrix &batch, int k, double lr, Rng &rng) {
  if (k < 1) throw ConfigError("cd_k_update: k must be >= 1");
  if (batch.cols != model.d()) throw ConfigError("cd_k_update: dimension mismatch");
  if (batch.rows == 0) return;
  const std::size_t d = model.d(), m = model.m();

  std::vector<double> da(d, 0.0), db(m, 0.0);
  Matrix dw(d, m);
  std::vector<double> v(d), hs(m);

  for (std::size_t s = 0; s < batch.rows; ++s) {
    std::span<const double> v0 = batch.row_span(s);
    check_binary(v0, "cd_k_update");
    const std::vector<double> h0 = hidden_expectation(model, v0);

    // positive statistics
    for (std::size_t i = 0; i < d; ++i) {
      da[i] += v0[i];
      if (v0[i] != 0.0) axpy(1.0, h0, dw.row_span(i));
    }
    for (std::size_t j = 0; j < m; ++j) db[j] += h0[j];

    // k alternating Gibbs samples for the negative phase
    v.assign(v0.begin(), v0.end());
    for (int step = 0; step < k; ++step) {
      const std::vector<double> hp = hidden_expectation(model, v);
      for (std::size_t j = 0; j < m; ++j) hs[j] = rng.bernoulli(hp[j]) ? 1.0 : 0.0;
      const std::vector<double> vp = visible_expectation(model, hs);
      for (std::size_t i = 0; i < d; ++i) v[i] = rng.bernoulli(vp[i]) ? 1.0 : 0.0;
    }
    const std::vector<double> hk = hidden_expectation(model, v);

    for (std::size_t i = 0; i < d; ++i) {
      da[i] -= v[i];
      if (v[i] != 0.0) axpy(-1.0, hk, dw.row_span(i));
    }
    for (std::size_t j = 0; j < m; ++j) db[j] -= hk[j];
  }

  const double scale = lr / static_cast<double>(batch.rows);
  for (std::size_t i = 0; i < d; ++i) model.visible_bias[i] += scale * da[i];
  for (std::size_t j = 0; j < m; ++j) model.hidden_bias[j] += scale * db[j];
  for (std::size_t i = 0; i < d * m; ++i) model.coupling.data[i] += scale * dw.data[i];
}

double reconstruction_error(const RbmModel &model, const Matrix &data) {
  if (data.rows == 0) throw UsageError("reconstruction_error: empty dataset");
  double total = 0.0;
  for (std::size_t s = 0; s < data.rows; ++s) {
    const std::vector<double> h = hidden_expectation(model, data.row_span(s));
    const std::vector<double> r = visible_expectation(model, h);
    for (std::size_t i = 0; i < model.d(); ++i) {
      const double diff = r[i] - data(s, i);
      total += diff * diff;
    }
  }
  return total / static_cast<double>(data.rows);
}

void potential_derivatives(const RbmModel &model, std::span<const double> v,
                           std::span<double> out) {
  if (v.size() != model.d()) throw ConfigError("potential_derivatives: dimension mismatch");
  check_binary(v, "potential_derivatives");
  if (out.size() != model.param_count())
    throw ConfigError("potential_derivatives: output buffer size mismatch");
  const std::size_t d = model.d(), m = model.m();
  const std::vector<double> hhat = hidden_expectation(model, v);
  for (std::size_t i = 0; i < d; ++i) out[i] = -v[i];
  for (std::size_t j = 0; j < m; ++j) out[d + j] = -hhat[j];
  for (std::size_t i = 0; i < d; ++i) {
    double *row = out.data() + d + m + i * m;
    if (v[i] == 0.0) {
      std::fill(row, row + m, 0.0);
    } else {
      for (std::size_t j = 0; j < m; ++j) row[j] = -v[i] * hhat[j];
    }
  }
}

std::vector<double> potential_derivatives(const RbmModel &model,
                                          std::span<const double> v) {
  std::vector<double> out(model.param_count());
  potential_derivatives(model, v, out);
  return out;
}

FisherDiagonal fit_fisher_diagonal(const RbmModel &model, const Matrix &dataset) {
  if (dataset.rows == 0) throw UsageError("fit_fisher_diagonal: empty dataset");
  const std::size_t n = model.param_count();
  FisherDiagonal f;
  f.mean_deriv.assign(n, 0.0);
  f.std_deriv.assign(n, 0.0);
  std::vector<double> m2(n, 0.0), deriv(n);
  // Welford over samples, population std at the end.
  for (std::size_t s = 0; s < dataset.rows; ++s) {
    potential_derivatives(model, dataset.row_span(s), deriv);
    f.sample_count += 1;
    const double inv = 1.0 / static_cast<double>(f.sample_count);
    for (std::size_t k = 0; k < n; ++k) {
      const double delta = deriv[k] - f.mean_deriv[k];
      f.mean_deriv[k] += delta * inv;
      m2[k] += delta * (deriv[k] - f.mean_deriv[k]);
    }
  }
  const double invn = 1.0 / static_cast<double>(f.sample_count);
  for (std::size_t k = 0; k < n; ++k) f.std_deriv[k] = std::sqrt(m2[k] * invn);
  return f;
}

std::vector<double> normalized_tangent_feature(const RbmModel &model,
                                               const FisherDiagonal &fisher,
                                               std::span<const double> v) {
  const std::size_t n = model.param_count();
  if (fisher.mean_deriv.size() != n)
    throw ConfigError("normalized_tangent_feature: Fisher diagonal size mismatch");
  std::vector<double> deriv(n);
  potential_derivatives(model, v, deriv);
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double sd = fisher.std_deriv[k];
    out[k] = sd < kSigmaFloor ? 0.0 : (fisher.mean_deriv[k] - deriv[k]) / sd;
  }
  return out;
}

}  // namespace grdn
