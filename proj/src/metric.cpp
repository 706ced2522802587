// grdn/metric.cpp

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

#include "grdn/metric.hpp"

#include <cmath>
#include <cstdio>

#include "grdn/errors.hpp"

namespace grdn {

double MetricState::trace() const {
  double t = 0.0;
  if (mode == MetricMode::full) {
    for (std::size_t i = 0; i < n; ++i) t += g(i, i);
  } else {
    for (double d : diag) t += d;
  }
  return t;
}

Matrix outer_product(std::span<const double> grad) {
  if (!all_finite(grad)) throw NumericError("outer_product: non-finite gradient");
  const std::size_t n = grad.size();
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = grad[i];
    if (gi == 0.0) continue;
    double *row = m.row(i);
    for (std::size_t j = 0; j < n; ++j) row[j] = gi * grad[j];
  }
  return m;
}

MetricState build_metric(const std::vector<std::vector<double>> &grads,
                         const std::vector<double> *weights, MetricMode mode,
                         double ridge, MeanKind mean) {
  if (mean != MeanKind::arithmetic)
    throw ConfigError("build_metric: only the arithmetic mean is implemented");
  if (grads.empty()) throw UsageError("build_metric: need at least one gradient");
  if (ridge < 0.0) throw ConfigError("build_metric: ridge must be nonnegative");
  const std::size_t n = grads.front().size();
  for (const auto &g : grads)
    if (g.size() != n) throw ConfigError("build_metric: gradient lengths differ");

  std::vector<double> w;
  if (weights) {
    w = *weights;
    if (w.size() != grads.size())
      throw ConfigError("build_metric: weight count does not match gradients");
    double sum = 0.0;
    for (double x : w) {
      if (x < 0.0) throw ConfigError("build_metric: weights must be nonnegative");
      sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw ConfigError("build_metric: weights must sum to 1");
  } else {
    w.assign(grads.size(), 1.0 / static_cast<double>(grads.size()));
  }

  MetricState m;
  m.mode = mode;
  m.n = n;
  m.ridge = ridge;
  if (mode == MetricMode::full) {
    if (n > kMaxFullMetricDim)
      throw ConfigError("build_metric: full mode is limited to n <= " +
                        std::to_string(kMaxFullMetricDim) +
                        "; use diagonal mode or flattening");
    m.g = Matrix(n, n);
    for (std::size_t s = 0; s < grads.size(); ++s) {
      const double ws = w[s];
      if (ws == 0.0) continue;
      const std::vector<double> &g = grads[s];
      for (std::size_t i = 0; i < n; ++i) {
        const double wgi = ws * g[i];
        if (wgi == 0.0) continue;
        double *row = m.g.row(i);
        for (std::size_t j = 0; j < n; ++j) row[j] += wgi * g[j];
      }
    }
    m.chol = m.g;
    for (std::size_t i = 0; i < n; ++i) m.chol(i, i) += ridge;
    try {
      cholesky_in_place(m.chol);
    } catch (const NumericError &) {
      throw NumericError(
          "build_metric: factorization failed at ridge=" + std::to_string(ridge) +
          "; the gradient set does not span, use a larger ridge");
    }
  } else {
    m.diag.assign(n, 0.0);
    for (std::size_t s = 0; s < grads.size(); ++s) {
      const double ws = w[s];
      const std::vector<double> &g = grads[s];
      for (std::size_t k = 0; k < n; ++k) m.diag[k] += ws * g[k] * g[k];
    }
  }
  return m;
}

double default_ridge(const MetricState &metric) {
  return metric.n == 0 ? 0.0 : 1e-10 * metric.trace() / static_cast<double>(metric.n);
}

double kernel(const MetricState &metric, std::span<const double> g_i,
              std::span<const double> g_j) {
  if (g_i.size() != metric.n || g_j.size() != metric.n)
    throw ConfigError("kernel: gradient length does not match metric");
  if (metric.mode == MetricMode::full) {
    if (metric.chol.empty()) throw UsageError("kernel: metric is not factorized");
    std::vector<double> y(g_j.begin(), g_j.end());
    cholesky_solve(metric.chol, y);
    return dot(g_i, y);
  }
  double s = 0.0;
  for (std::size_t k = 0; k < metric.n; ++k) {
    const double d = metric.diag[k] + metric.ridge;
    if (d <= 0.0) throw NumericError("kernel: singular diagonal metric without ridge");
    s += g_i[k] * g_j[k] / d;
  }
  return s;
}

std::vector<std::vector<double>> apply_reparametrization(
    const std::vector<std::vector<double>> &grads, const Reparametrization &r) {
  const Matrix &j = r.jacobian;
  if (j.rows != j.cols) throw ConfigError("apply_reparametrization: Jacobian must be square");
  std::vector<std::vector<double>> out;
  out.reserve(grads.size());
  for (const auto &g : grads) {
    if (g.size() != j.rows)
      throw ConfigError("apply_reparametrization: gradient length mismatch");
    std::vector<double> t(j.cols, 0.0);
    matvec_t(j, g, t);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<double> diagonal_normalize(const MetricState &metric,
                                       std::span<const double> grad) {
  if (metric.mode != MetricMode::diagonal)
    throw UsageError("diagonal_normalize: metric must be in diagonal mode");
  if (grad.size() != metric.n)
    throw ConfigError("diagonal_normalize: gradient length mismatch");
  std::vector<double> out(metric.n);
  for (std::size_t k = 0; k < metric.n; ++k)
    out[k] = grad[k] / std::sqrt(metric.diag[k] + metric.ridge);
  return out;
}

QuadFeature flatten_quadratic(const SparseVec &grad, bool double_off_diagonal) {
  QuadFeature q;
  const std::size_t z = grad.nnz();
  q.idx.reserve(z * (z + 1) / 2);
  q.val.reserve(z * (z + 1) / 2);
  for (std::size_t a = 0; a < z; ++a) {
    for (std::size_t b = a; b < z; ++b) {
      double v = grad.val[a] * grad.val[b];
      if (double_off_diagonal && a != b) v *= 2.0;
      q.idx.emplace_back(grad.idx[a], grad.idx[b]);
      q.val.push_back(v);
    }
  }
  return q;
}

nlohmann::json metric_diagnostics(const MetricState &metric) {
  double min_eig = 0.0;
  if (metric.mode == MetricMode::full) {
    min_eig = spd_min_eigenvalue(metric.chol);
  } else {
    if (!metric.diag.empty()) {
      min_eig = metric.diag[0] + metric.ridge;
      for (double d : metric.diag) min_eig = std::min(min_eig, d + metric.ridge);
    }
  }
  return nlohmann::json{
      {"n", metric.n},
      {"mode", metric.mode == MetricMode::full ? "full" : "diagonal"},
      {"ridge", metric.ridge},
      {"trace", metric.trace()},
      {"min_eig_estimate", min_eig}};
}

void write_gram_csv(std::ostream &out, const MetricState &metric,
                    const std::vector<std::vector<double>> &grads,
                    const std::vector<std::string> &header_comments) {
  for (const std::string &c : header_comments) out << "# " << c << "\n";
  out << "i,j,value\n";
  char buf[64];
  for (std::size_t i = 0; i < grads.size(); ++i) {
    for (std::size_t j = 0; j < grads.size(); ++j) {
      const double v = kernel(metric, grads[i], grads[j]);
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", i, j, v);
      out << buf;
    }
  }
}

}  // namespace grdn
