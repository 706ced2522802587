// grdn/metric.hpp

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
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "grdn/la.hpp"

namespace grdn {

enum class MetricMode { full, diagonal };

/// Aggregation of the per-sample outer products. Only the weighted arithmetic
/// mean is implemented; the enum is the extension point for other
/// quasi-arithmetic means.
enum class MeanKind { arithmetic };

/// Full mode stores G (without ridge) and the Cholesky factor of G + ridge*I.
/// Diagonal mode stores the raw accumulated diagonal; the ridge is added
/// wherever the diagonal is used. Immutable after build; kernel evaluations
/// are read-only and safe to run concurrently.
struct MetricState {
  MetricMode mode = MetricMode::diagonal;
  std::size_t n = 0;
  double ridge = 0.0;
  Matrix g;                  // full mode only
  Matrix chol;               // full mode only, factor of g + ridge*I
  std::vector<double> diag;  // diagonal mode only

  double trace() const;
};

/// Full mode is capped at this dimension (the matrix alone is n^2 * 8 bytes);
/// larger models must use diagonal mode or quadratic flattening.
inline constexpr std::size_t kMaxFullMetricDim = 4096;

/// Rank <= 1 PSD matrix g g^T.
Matrix outer_product(std::span<const double> grad);

/// Weighted mean of gradient outer products. Weights must be nonnegative and
/// sum to 1 (default uniform). Full mode factorizes G + ridge*I immediately;
/// a failed factorization reports that a larger ridge is needed.
MetricState build_metric(const std::vector<std::vector<double>> &grads,
                         const std::vector<double> *weights, MetricMode mode,
                         double ridge, MeanKind mean = MeanKind::arithmetic);

/// Production default: 1e-10 * trace(G) / n.
double default_ridge(const MetricState &metric);

/// g_i^T (G + ridge*I)^{-1} g_j via triangular solves; no explicit inverse is
/// ever formed.
double kernel(const MetricState &metric, std::span<const double> g_i,
              std::span<const double> g_j);

/// Invertible linear change of parameters theta = J mu.
struct Reparametrization {
  Matrix jacobian;
};

/// Chain rule: each gradient g maps to J^T g.
std::vector<std::vector<double>> apply_reparametrization(
    const std::vector<std::vector<double>> &grads, const Reparametrization &r);

/// Coordinate-wise grad_k / sqrt(diag_k + ridge). Diagonal mode only.
std::vector<double> diagonal_normalize(const MetricState &metric,
                                       std::span<const double> grad);

/// Sparse vector as parallel index/value arrays; indices strictly increasing.
struct SparseVec {
  std::vector<std::uint32_t> idx;
  std::vector<double> val;

  std::size_t nnz() const { return idx.size(); }
};

/// Upper-triangle explicit quadratic feature map: entries (i<=j) -> g_i*g_j.
/// nnz(out) = z(z+1)/2 <= z^2 for input nnz z. With double_off_diagonal the
/// off-diagonal entries are doubled so <flatten(g), flatten(g')> matches
/// <g,g'>^2 exactly.
struct QuadFeature {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> idx;
  std::vector<double> val;

  std::size_t nnz() const { return idx.size(); }
};

QuadFeature flatten_quadratic(const SparseVec &grad, bool double_off_diagonal = false);

/// {n, mode, ridge, trace, min_eig_estimate}
nlohmann::json metric_diagnostics(const MetricState &metric);

/// Gram matrix export, one "i,j,value" row per ordered pair.
void write_gram_csv(std::ostream &out, const MetricState &metric,
                    const std::vector<std::vector<double>> &grads,
                    const std::vector<std::string> &header_comments = {});

}  // namespace grdn
