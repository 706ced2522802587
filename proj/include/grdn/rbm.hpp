// grdn/rbm.hpp

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
#include <span>
#include <string>
#include <vector>

#include "grdn/la.hpp"
#include "grdn/rng.hpp"

namespace grdn {

/// Binary RBM: visible bias a (d), hidden bias b (m), coupling W (d x m).
struct RbmModel {
  std::vector<double> visible_bias;
  std::vector<double> hidden_bias;
  Matrix coupling;

  std::size_t d() const { return visible_bias.size(); }
  std::size_t m() const { return hidden_bias.size(); }
  /// Flat derivative/parameter layout: a, b, W row-major.
  std::size_t param_count() const { return d() + m() + d() * m(); }
};

/// Standard deviation floor for the diagonal Fisher normalization. A
/// coordinate whose derivative is constant over the fitting set emits 0.
inline constexpr double kSigmaFloor = 1e-8;

/// Zero biases, couplings from U(-scale, scale); deterministic given seed.
RbmModel init_rbm(std::size_t d, std::size_t m, double scale, std::uint64_t seed);

/// -a^T v - b^T h - v^T W h. Inputs must be exactly 0/1 vectors.
double energy(const RbmModel &model, std::span<const double> v,
              std::span<const double> h);

/// sigma(b + W^T v)
std::vector<double> hidden_expectation(const RbmModel &model,
                                       std::span<const double> v);

/// sigma(a + W h)
std::vector<double> visible_expectation(const RbmModel &model,
                                        std::span<const double> h);

/// One CD-k step over the batch (rows are visible vectors): positive phase
/// uses E[h|v], the negative phase runs k alternating Gibbs samples, and the
/// update is lr * (positive - negative statistics) averaged over the batch.
void cd_k_update(RbmModel &model, const Matrix &batch, int k, double lr, Rng &rng);

/// Mean squared mean-field reconstruction error over the rows of data.
double reconstruction_error(const RbmModel &model, const Matrix &data);

/// (dU/da, dU/db, dU/dW) with h replaced by E[h|v]:
/// dU/da_i = -v_i, dU/db_j = -hhat_j, dU/dW_ij = -v_i * hhat_j.
std::vector<double> potential_derivatives(const RbmModel &model,
                                          std::span<const double> v);
void potential_derivatives(const RbmModel &model, std::span<const double> v,
                           std::span<double> out);

/// Per-coordinate mean and population standard deviation of the potential
/// derivatives over a dataset.
struct FisherDiagonal {
  std::vector<double> mean_deriv;
  std::vector<double> std_deriv;
  std::int64_t sample_count = 0;
};

FisherDiagonal fit_fisher_diagonal(const RbmModel &model, const Matrix &dataset);

/// V_k = (mean_k - deriv_k(v)) / std_k; coordinates floored at kSigmaFloor
/// emit 0.
std::vector<double> normalized_tangent_feature(const RbmModel &model,
                                               const FisherDiagonal &fisher,
                                               std::span<const double> v);

}  // namespace grdn
