// grdn/grad_features.hpp

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
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "grdn/metric.hpp"
#include "grdn/network.hpp"

namespace grdn {

/// One per-sample, per-hypothesized-label sparse gradient vector.
struct GradFeature {
  std::int64_t sample_id = 0;
  int hyp_label = 0;
  std::uint32_t dense_len = 0;
  std::vector<std::uint32_t> indices;  // strictly increasing
  std::vector<double> values;
  std::vector<std::string> norm_tag;  // normalizations applied, in order

  std::size_t nnz() const { return indices.size(); }
  /// Throws ConfigError when the index/value invariants are violated.
  void validate() const;
  SparseVec to_sparse() const { return {indices, values}; }
};

/// ceil(fraction * count) with a guard against floating-point error when the
/// product is an exact integer (0.1 * 70 must give 7, not 8).
std::size_t ceil_count(double fraction, std::size_t count);

/// Nearest-rank index: max(1, ceil(q/100 * n)).
std::size_t percentile_rank(double q, std::size_t n);

enum class LabelMode { random_labels, all_labels, true_labels };

std::string label_mode_name(LabelMode mode);
LabelMode label_mode_from_name(const std::string &name);

/// Visits one dense per-sample gradient per (sample, hypothesized label) pair
/// in deterministic order: samples in batch order, labels ascending in
/// all_labels mode. random_labels draws one label per sample from seed.
void for_each_gradient(
    const NetworkSpec &spec, const ParamLayout &layout, const ParamVector &params,
    const SampleBatch &batch, LabelMode mode, std::uint64_t seed,
    const std::function<void(std::size_t sample, int hyp_label,
                             std::span<const double> grad)> &fn);

/// Materialized dense features (indices 0..n-1); intended for small nets.
std::vector<GradFeature> extract_gradients(const NetworkSpec &spec,
                                           const ParamLayout &layout,
                                           const ParamVector &params,
                                           const SampleBatch &batch,
                                           LabelMode mode, std::uint64_t seed);

/// Nearest-rank percentile sparsification: threshold t is the
/// percentile_rank(q, N)-th smallest |v|; entries with |v| > t are kept
/// (strict, so ties at the threshold are dropped).
GradFeature percentile_sparsify(std::span<const double> dense, double q,
                                std::int64_t sample_id = 0, int hyp_label = 0);

/// Indices of the most important keep_fraction of coordinates per label,
/// ranked by mean |gradient| over the fitting features (ties break to the
/// lower index).
struct LabelMask {
  double keep_fraction = 0.1;
  std::uint32_t dense_len = 0;
  std::map<int, std::vector<std::uint32_t>> masks;  // ascending index sets
};

LabelMask fit_label_masks(const std::vector<GradFeature> &features,
                          double keep_fraction);

/// Streaming variant of fit_label_masks for large gradient sets.
class LabelMaskAccumulator {
 public:
  explicit LabelMaskAccumulator(std::uint32_t dense_len) : dense_len_(dense_len) {}
  void add(int hyp_label, std::span<const double> dense_grad);
  void add(const GradFeature &feature);
  LabelMask finish(double keep_fraction) const;

 private:
  std::uint32_t dense_len_;
  std::map<int, std::pair<std::int64_t, std::vector<double>>> sums_;
};

/// Keeps only the masked coordinates of the feature's hypothesized label
/// (index-set intersection). Throws UsageError for labels unseen at fit time.
GradFeature apply_label_mask(const LabelMask &mask, const GradFeature &feature);

// ---- normalization -------------------------------------------------------

struct NormStep {
  enum class Kind { standard, l2, scale, power };
  Kind kind = Kind::l2;
  double exponent = 1.0;  // power only; must be > 0

  std::string tag() const;
};

/// Parses ["scale", "power(0.5)"] style pipeline descriptions.
std::vector<NormStep> parse_norm_steps(const std::vector<std::string> &names);

/// Per-coordinate statistics over the gradient training set, computed from
/// retained (sparse) coordinates only; absent coordinates do not contribute.
struct StandardStats {
  std::uint32_t dense_len = 0;
  std::vector<std::int64_t> count;
  std::vector<double> mean;
  std::vector<double> m2;
  bool fitted = false;

  void init(std::uint32_t len);
  void add(const GradFeature &feature);
  /// Population standard deviation of coordinate k.
  double stddev(std::uint32_t k) const;
};

/// Ordered normalization pipeline. Steps apply left to right:
///   standard: per-coordinate z-score from fitted stats (coordinates never
///             seen at fit time pass through; constant coordinates emit 0);
///   l2:       v / ||v||_2, zero vectors pass through;
///   scale:    v / max|v_i|, zero vectors pass through;
///   power(p): sign(v) * |v|^p elementwise.
struct NormPipeline {
  std::vector<NormStep> steps;
  StandardStats stats;

  bool needs_stats() const;
  std::vector<std::string> tags() const;
  GradFeature apply(GradFeature f) const;
};

// ---- gradient graph ------------------------------------------------------

/// Graph over base-network parameters: candidate edges connect nonzero
/// gradient coordinates in adjacent layers, weighted by the outer product
/// g_i * g_j; the top ceil(alpha * candidates) per layer pair survive.
struct GradGraph {
  struct Edge {
    std::uint32_t src = 0, dst = 0;
    double weight = 0.0;
  };

  double alpha = 1.0;
  int num_layers = 0;
  std::vector<std::vector<std::uint32_t>> layer_nodes;  // retained endpoints
  std::vector<Edge> edges;  // layer-pair order, |weight| descending
  std::vector<std::size_t> pair_candidates;  // per adjacent layer pair
  std::vector<std::size_t> pair_retained;
};

GradGraph build_grad_graph(const ParamLayout &layout, const SparseVec &grad,
                           double alpha);

/// Computes the per-sample gradient at (x, label) and builds the graph;
/// presparsify_q >= 0 applies percentile sparsification first, otherwise only
/// exact zeros are dropped.
GradGraph build_grad_graph(const NetworkSpec &spec, const ParamLayout &layout,
                           const ParamVector &params, std::span<const double> x,
                           int label, double alpha, double presparsify_q = -1.0);

/// Graphviz text: one cluster per layer, weight-labeled edges, deterministic
/// ordering.
std::string export_dot(const GradGraph &graph,
                       const std::vector<std::string> &header_comments = {});

// ---- gradient feature files ("GRDF") --------------------------------------

inline constexpr char kGradFileMagic[4] = {'G', 'R', 'D', 'F'};
inline constexpr std::uint32_t kGradFileVersion = 1;

struct GradFileHeader {
  std::uint32_t dense_len = 0;
  std::vector<std::string> norm;
  double q = -1.0;
  std::string label_mode;
  std::string base_hash;
  nlohmann::json extra;  // provenance: config hash, seed, ...
};

/// Record stream: sample_id u32, hyp_label u16, nnz u32, indices u32[] LE,
/// values f64[] LE.
class GradFeatureWriter {
 public:
  GradFeatureWriter(const std::string &path, const GradFileHeader &header);
  void write(const GradFeature &feature);
  std::size_t written() const { return written_; }
  void close();

 private:
  std::ofstream out_;
  std::string path_;
  std::uint32_t dense_len_;
  std::size_t written_ = 0;
};

class GradFeatureReader {
 public:
  explicit GradFeatureReader(const std::string &path);
  const GradFileHeader &header() const { return header_; }
  /// False at clean EOF; throws ParseError on a truncated record.
  bool next(GradFeature &feature);

 private:
  std::ifstream in_;
  std::string path_;
  GradFileHeader header_;
  std::size_t offset_ = 0;
};

std::vector<GradFeature> load_grad_features(const std::string &path,
                                            GradFileHeader *header = nullptr);

}  // namespace grdn
