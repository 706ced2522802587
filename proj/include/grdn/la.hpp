// grdn/la.hpp

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

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "grdn/rng.hpp"

namespace grdn {

/// Dense row-major matrix of doubles. All heavy math in this project runs on
/// 64-bit floats; the invariance and gradient tests need the headroom.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double &operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double *row(std::size_t i) { return data.data() + i * cols; }
  const double *row(std::size_t i) const { return data.data() + i * cols; }

  std::span<double> row_span(std::size_t i) { return {row(i), cols}; }
  std::span<const double> row_span(std::size_t i) const { return {row(i), cols}; }

  bool empty() const { return data.empty(); }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

/// y = M x
void matvec(const Matrix &m, std::span<const double> x, std::span<double> y);

/// y = M^T x
void matvec_t(const Matrix &m, std::span<const double> x, std::span<double> y);

/// C = A B
Matrix matmul(const Matrix &a, const Matrix &b);

/// In-place lower Cholesky factor of a symmetric positive definite matrix.
/// The strict upper triangle is zeroed. Throws NumericError when a pivot is
/// not positive.
void cholesky_in_place(Matrix &a);

/// Solves L L^T x = b in place given the lower factor from cholesky_in_place.
void cholesky_solve(const Matrix &lower, std::span<double> b);

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
/// Intended for the small matrices in diagnostics and tests (n <= a few
/// hundred).
std::vector<double> symmetric_eigenvalues(Matrix a);

/// Smallest eigenvalue of an SPD matrix given its Cholesky factor, by inverse
/// power iteration with a fixed deterministic start vector.
double spd_min_eigenvalue(const Matrix &lower, int iters = 200);

/// Random orthogonal matrix (QR of a Gaussian matrix via modified
/// Gram-Schmidt).
Matrix random_orthogonal(std::size_t n, Rng &rng);

/// Random invertible matrix with singular values in [0.5, 2]: Q1 diag(s) Q2.
/// Condition number is at most 4 by construction.
Matrix random_well_conditioned(std::size_t n, Rng &rng);

}  // namespace grdn
