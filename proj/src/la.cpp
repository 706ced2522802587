// grdn/la.cpp

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

#include "grdn/la.hpp"

#include <algorithm>
#include <cmath>

#include "grdn/errors.hpp"

namespace grdn {

void matvec(const Matrix &m, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < m.rows; ++i) y[i] = dot(m.row_span(i), x);
}

void matvec_t(const Matrix &m, std::span<const double> x, std::span<double> y) {
  std::fill(y.begin(), y.end(), 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) axpy(x[i], m.row_span(i), y);
}

Matrix matmul(const Matrix &a, const Matrix &b) {
  Matrix c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double *arow = a.row(i);
    double *crow = c.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double *brow = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

void cholesky_in_place(Matrix &a) {
  const std::size_t n = a.rows;
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
    if (!(d > 0.0) || !std::isfinite(d))
      throw NumericError("Cholesky factorization failed: pivot " +
                         std::to_string(j) + " is not positive");
    const double ljj = std::sqrt(d);
    a(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
      a(i, j) = s / ljj;
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) a(i, j) = 0.0;
}

void cholesky_solve(const Matrix &lower, std::span<double> b) {
  const std::size_t n = lower.rows;
  // L y = b
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    const double *li = lower.row(i);
    for (std::size_t k = 0; k < i; ++k) s -= li[k] * b[k];
    b[i] = s / li[i];
  }
  // L^T x = y
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= lower(k, ii) * b[k];
    b[ii] = s / lower(ii, ii);
  }
}

std::vector<double> symmetric_eigenvalues(Matrix a) {
  const std::size_t n = a.rows;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-28 * static_cast<double>(n ? n : 1)) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t =
            (theta >= 0.0 ? 1.0 : -1.0) /
            (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a(i, i);
  std::sort(eig.begin(), eig.end());
  return eig;
}

double spd_min_eigenvalue(const Matrix &lower, int iters) {
  const std::size_t n = lower.rows;
  if (n == 0) return 0.0;
  std::vector<double> v(n);
  Rng rng(0x5eed);
  for (double &x : v) x = rng.normal();
  double lambda_inv = 0.0;
  for (int it = 0; it < iters; ++it) {
    cholesky_solve(lower, v);
    double norm = std::sqrt(dot(v, v));
    if (norm == 0.0) return 0.0;
    for (double &x : v) x /= norm;
    lambda_inv = norm;
  }
  // Rayleigh quotient of the inverse at the converged vector.
  std::vector<double> w = v;
  cholesky_solve(lower, w);
  lambda_inv = dot(v, w);
  return lambda_inv > 0.0 ? 1.0 / lambda_inv : 0.0;
}

Matrix random_orthogonal(std::size_t n, Rng &rng) {
  Matrix q(n, n);
  for (double &x : q.data) x = rng.normal();
  // Modified Gram-Schmidt over rows.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      const double proj = dot(q.row_span(i), q.row_span(k));
      axpy(-proj, q.row_span(k), q.row_span(i));
    }
    double norm = std::sqrt(dot(q.row_span(i), q.row_span(i)));
    if (norm < 1e-12) {
      // Degenerate draw; replace with a unit basis vector and re-orthogonalize.
      std::fill(q.row(i), q.row(i) + n, 0.0);
      q(i, i % n) = 1.0;
      for (std::size_t k = 0; k < i; ++k) {
        const double proj = dot(q.row_span(i), q.row_span(k));
        axpy(-proj, q.row_span(k), q.row_span(i));
      }
      norm = std::sqrt(dot(q.row_span(i), q.row_span(i)));
    }
    for (std::size_t j = 0; j < n; ++j) q(i, j) /= norm;
  }
  return q;
}

Matrix random_well_conditioned(std::size_t n, Rng &rng) {
  Matrix q1 = random_orthogonal(n, rng);
  Matrix q2 = random_orthogonal(n, rng);
  std::vector<double> s(n);
  for (double &x : s) x = rng.uniform(0.5, 2.0);
  // J = Q1 diag(s) Q2
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) q1(i, j) *= s[j];
  return matmul(q1, q2);
}

}  // namespace grdn
