// grdn/grad_features.cpp

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

#include "grdn/grad_features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "grdn/errors.hpp"
#include "grdn/rng.hpp"

namespace grdn {

void GradFeature::validate() const {
  if (indices.size() != values.size())
    throw ConfigError("GradFeature: index/value length mismatch");
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i > 0 && indices[i] <= indices[i - 1])
      throw ConfigError("GradFeature: indices must be strictly increasing");
    if (indices[i] >= dense_len)
      throw ConfigError("GradFeature: index out of range");
    if (!std::isfinite(values[i]))
      throw ConfigError("GradFeature: non-finite value");
  }
}

std::size_t ceil_count(double fraction, std::size_t count) {
  if (count == 0) return 0;
  const double x = fraction * static_cast<double>(count);
  const double r = std::nearbyint(x);
  if (std::abs(x - r) < 1e-9 * std::max<double>(1.0, static_cast<double>(count)))
    return static_cast<std::size_t>(r);
  return static_cast<std::size_t>(std::ceil(x));
}

std::size_t percentile_rank(double q, std::size_t n) {
  return std::max<std::size_t>(1, ceil_count(q / 100.0, n));
}

std::string label_mode_name(LabelMode mode) {
  switch (mode) {
    case LabelMode::random_labels: return "random";
    case LabelMode::all_labels: return "all";
    case LabelMode::true_labels: return "true";
  }
  return "random";
}

LabelMode label_mode_from_name(const std::string &name) {
  if (name == "random") return LabelMode::random_labels;
  if (name == "all") return LabelMode::all_labels;
  if (name == "true") return LabelMode::true_labels;
  throw ConfigError("unknown label mode \"" + name + "\"");
}

void for_each_gradient(
    const NetworkSpec &spec, const ParamLayout &layout, const ParamVector &params,
    const SampleBatch &batch, LabelMode mode, std::uint64_t seed,
    const std::function<void(std::size_t, int, std::span<const double>)> &fn) {
  const int classes = spec.num_classes;
  if (mode == LabelMode::true_labels && !batch.has_labels())
    throw UsageError("for_each_gradient: true_labels mode needs labels");
  Rng rng(seed);
  std::vector<double> grad(layout.total);
  WorkBuffers wb;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const std::span<const double> x = batch.inputs.row_span(s);
    if (mode == LabelMode::all_labels) {
      for (int c = 0; c < classes; ++c) {
        per_sample_gradient(spec, layout, params, x, c, grad, &wb);
        fn(s, c, grad);
      }
    } else {
      int c;
      if (mode == LabelMode::random_labels) {
        c = rng.uniform_int(classes);
      } else {
        c = batch.labels[s];
        if (c < 0 || c >= classes)
          throw UsageError("for_each_gradient: label out of range");
      }
      per_sample_gradient(spec, layout, params, x, c, grad, &wb);
      fn(s, c, grad);
    }
  }
}

std::vector<GradFeature> extract_gradients(const NetworkSpec &spec,
                                           const ParamLayout &layout,
                                           const ParamVector &params,
                                           const SampleBatch &batch,
                                           LabelMode mode, std::uint64_t seed) {
  std::vector<GradFeature> out;
  for_each_gradient(spec, layout, params, batch, mode, seed,
                    [&](std::size_t s, int c, std::span<const double> g) {
                      GradFeature f;
                      f.sample_id = static_cast<std::int64_t>(s);
                      f.hyp_label = c;
                      f.dense_len = static_cast<std::uint32_t>(g.size());
                      f.indices.resize(g.size());
                      for (std::uint32_t i = 0; i < g.size(); ++i) f.indices[i] = i;
                      f.values.assign(g.begin(), g.end());
                      out.push_back(std::move(f));
                    });
  return out;
}

GradFeature percentile_sparsify(std::span<const double> dense, double q,
                                std::int64_t sample_id, int hyp_label) {
  if (q < 0.0 || q >= 100.0)
    throw ConfigError("percentile_sparsify: q must be in [0, 100)");
  const std::size_t n = dense.size();
  GradFeature f;
  f.sample_id = sample_id;
  f.hyp_label = hyp_label;
  f.dense_len = static_cast<std::uint32_t>(n);
  if (n == 0) return f;

  std::vector<double> mags(n);
  for (std::size_t i = 0; i < n; ++i) mags[i] = std::abs(dense[i]);
  const std::size_t rank = percentile_rank(q, n);
  std::nth_element(mags.begin(), mags.begin() + (rank - 1), mags.end());
  const double threshold = mags[rank - 1];

  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(dense[i]) > threshold) {
      f.indices.push_back(static_cast<std::uint32_t>(i));
      f.values.push_back(dense[i]);
    }
  }
  return f;
}

void LabelMaskAccumulator::add(int hyp_label, std::span<const double> dense_grad) {
  if (dense_grad.size() != dense_len_)
    throw ConfigError("LabelMaskAccumulator: dense length mismatch");
  auto &slot = sums_[hyp_label];
  if (slot.second.empty()) slot.second.assign(dense_len_, 0.0);
  slot.first += 1;
  for (std::size_t i = 0; i < dense_len_; ++i) slot.second[i] += std::abs(dense_grad[i]);
}

void LabelMaskAccumulator::add(const GradFeature &feature) {
  if (feature.dense_len != dense_len_)
    throw ConfigError("LabelMaskAccumulator: dense length mismatch");
  auto &slot = sums_[feature.hyp_label];
  if (slot.second.empty()) slot.second.assign(dense_len_, 0.0);
  slot.first += 1;
  for (std::size_t i = 0; i < feature.nnz(); ++i)
    slot.second[feature.indices[i]] += std::abs(feature.values[i]);
}

LabelMask LabelMaskAccumulator::finish(double keep_fraction) const {
  if (keep_fraction <= 0.0 || keep_fraction > 1.0)
    throw ConfigError("label mask keep_fraction must be in (0, 1]");
  if (sums_.empty()) throw UsageError("label mask fit saw no features");
  LabelMask mask;
  mask.keep_fraction = keep_fraction;
  mask.dense_len = dense_len_;
  const std::size_t keep = ceil_count(keep_fraction, dense_len_);
  for (const auto &[label, slot] : sums_) {
    std::vector<std::uint32_t> order(dense_len_);
    for (std::uint32_t i = 0; i < dense_len_; ++i) order[i] = i;
    const std::vector<double> &sum = slot.second;
    // Mean |g| ranks identically to the sum within one label; ties break to
    // the lower index.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return sum[a] > sum[b]; });
    order.resize(keep);
    std::sort(order.begin(), order.end());
    mask.masks[label] = std::move(order);
  }
  return mask;
}

LabelMask fit_label_masks(const std::vector<GradFeature> &features,
                          double keep_fraction) {
  if (features.empty()) throw UsageError("fit_label_masks: no features");
  LabelMaskAccumulator acc(features.front().dense_len);
  for (const GradFeature &f : features) acc.add(f);
  return acc.finish(keep_fraction);
}

GradFeature apply_label_mask(const LabelMask &mask, const GradFeature &feature) {
  const auto it = mask.masks.find(feature.hyp_label);
  if (it == mask.masks.end())
    throw UsageError("apply_label_mask: label " + std::to_string(feature.hyp_label) +
                     " was not seen when the mask was fitted");
  const std::vector<std::uint32_t> &keep = it->second;
  GradFeature out;
  out.sample_id = feature.sample_id;
  out.hyp_label = feature.hyp_label;
  out.dense_len = feature.dense_len;
  out.norm_tag = feature.norm_tag;
  std::size_t k = 0;
  for (std::size_t i = 0; i < feature.nnz(); ++i) {
    while (k < keep.size() && keep[k] < feature.indices[i]) ++k;
    if (k < keep.size() && keep[k] == feature.indices[i]) {
      out.indices.push_back(feature.indices[i]);
      out.values.push_back(feature.values[i]);
    }
  }
  return out;
}

// ---- normalization -------------------------------------------------------

std::string NormStep::tag() const {
  switch (kind) {
    case Kind::standard: return "standard";
    case Kind::l2: return "l2";
    case Kind::scale: return "scale";
    case Kind::power: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "power(%g)", exponent);
      return buf;
    }
  }
  return "";
}

std::vector<NormStep> parse_norm_steps(const std::vector<std::string> &names) {
  std::vector<NormStep> steps;
  for (const std::string &name : names) {
    NormStep s;
    if (name == "standard") {
      s.kind = NormStep::Kind::standard;
    } else if (name == "l2") {
      s.kind = NormStep::Kind::l2;
    } else if (name == "scale") {
      s.kind = NormStep::Kind::scale;
    } else if (name.rfind("power(", 0) == 0 && name.back() == ')') {
      s.kind = NormStep::Kind::power;
      try {
        s.exponent = std::stod(name.substr(6, name.size() - 7));
      } catch (const std::exception &) {
        throw ConfigError("bad power norm \"" + name + "\"");
      }
      if (!(s.exponent > 0.0))
        throw ConfigError("power norm exponent must be > 0");
    } else {
      throw ConfigError("unknown normalization \"" + name + "\"");
    }
    steps.push_back(s);
  }
  return steps;
}

void StandardStats::init(std::uint32_t len) {
  dense_len = len;
  count.assign(len, 0);
  mean.assign(len, 0.0);
  m2.assign(len, 0.0);
  fitted = true;
}

void StandardStats::add(const GradFeature &feature) {
  if (!fitted) throw UsageError("StandardStats: init before add");
  if (feature.dense_len != dense_len)
    throw ConfigError("StandardStats: dense length mismatch");
  for (std::size_t i = 0; i < feature.nnz(); ++i) {
    const std::uint32_t k = feature.indices[i];
    const double v = feature.values[i];
    count[k] += 1;
    const double delta = v - mean[k];
    mean[k] += delta / static_cast<double>(count[k]);
    m2[k] += delta * (v - mean[k]);
  }
}

double StandardStats::stddev(std::uint32_t k) const {
  return count[k] > 0 ? std::sqrt(m2[k] / static_cast<double>(count[k])) : 0.0;
}

bool NormPipeline::needs_stats() const {
  for (const NormStep &s : steps)
    if (s.kind == NormStep::Kind::standard) return true;
  return false;
}

std::vector<std::string> NormPipeline::tags() const {
  std::vector<std::string> t;
  for (const NormStep &s : steps) t.push_back(s.tag());
  return t;
}

GradFeature NormPipeline::apply(GradFeature f) const {
  for (const NormStep &s : steps) {
    switch (s.kind) {
      case NormStep::Kind::standard: {
        if (!stats.fitted)
          throw UsageError("standard norm requires fitted statistics");
        if (stats.dense_len != f.dense_len)
          throw ConfigError("standard norm statistics dense length mismatch");
        for (std::size_t i = 0; i < f.nnz(); ++i) {
          const std::uint32_t k = f.indices[i];
          if (stats.count[k] == 0) continue;  // unseen coordinate passes through
          const double sd = stats.stddev(k);
          f.values[i] = sd < 1e-8 ? 0.0 : (f.values[i] - stats.mean[k]) / sd;
        }
        break;
      }
      case NormStep::Kind::l2: {
        double norm = std::sqrt(dot(f.values, f.values));
        if (norm > 0.0)
          for (double &v : f.values) v /= norm;
        break;
      }
      case NormStep::Kind::scale: {
        double mx = 0.0;
        for (double v : f.values) mx = std::max(mx, std::abs(v));
        if (mx > 0.0)
          for (double &v : f.values) v /= mx;
        break;
      }
      case NormStep::Kind::power: {
        for (double &v : f.values)
          v = v == 0.0 ? 0.0 : std::copysign(std::pow(std::abs(v), s.exponent), v);
        break;
      }
    }
    f.norm_tag.push_back(s.tag());
  }
  return f;
}

// ---- gradient graph ------------------------------------------------------

GradGraph build_grad_graph(const ParamLayout &layout, const SparseVec &grad,
                           double alpha) {
  if (!(alpha > 0.0) || alpha > 1.0)
    throw ConfigError("build_grad_graph: alpha must be in (0, 1]");
  const int nlayers = static_cast<int>(layout.layers.size());
  GradGraph graph;
  graph.alpha = alpha;
  graph.num_layers = nlayers;
  graph.layer_nodes.resize(nlayers);

  // Nonzero coordinates per layer; layout ranges are ordered so one sweep
  // suffices.
  std::vector<std::vector<std::pair<std::uint32_t, double>>> per_layer(nlayers);
  {
    std::size_t l = 0;
    for (std::size_t i = 0; i < grad.nnz(); ++i) {
      if (grad.val[i] == 0.0) continue;
      const std::uint32_t idx = grad.idx[i];
      while (l + 1 < layout.layers.size() && idx >= layout.layers[l].end) ++l;
      if (idx < layout.layers[l].begin || idx >= layout.layers[l].end)
        throw ConfigError("build_grad_graph: coordinate outside layout");
      per_layer[l].emplace_back(idx, grad.val[i]);
    }
  }

  std::vector<std::vector<bool>> used(nlayers);
  for (int l = 0; l < nlayers; ++l) used[l].assign(per_layer[l].size(), false);

  for (int l = 0; l + 1 < nlayers; ++l) {
    const auto &a = per_layer[l];
    const auto &b = per_layer[l + 1];
    const std::size_t candidates = a.size() * b.size();
    graph.pair_candidates.push_back(candidates);
    if (candidates == 0) {
      graph.pair_retained.push_back(0);
      continue;
    }
    const std::size_t retain = std::min(candidates, ceil_count(alpha, candidates));
    graph.pair_retained.push_back(retain);

    struct Cand {
      std::uint32_t ai, bi;
      double w;
    };
    std::vector<Cand> cands;
    cands.reserve(candidates);
    for (std::uint32_t ai = 0; ai < a.size(); ++ai)
      for (std::uint32_t bi = 0; bi < b.size(); ++bi)
        cands.push_back({ai, bi, a[ai].second * b[bi].second});
    const auto heavier = [&](const Cand &x, const Cand &y) {
      const double wx = std::abs(x.w), wy = std::abs(y.w);
      if (wx != wy) return wx > wy;
      if (a[x.ai].first != a[y.ai].first) return a[x.ai].first < a[y.ai].first;
      return b[x.bi].first < b[y.bi].first;
    };
    std::nth_element(cands.begin(), cands.begin() + (retain - 1), cands.end(), heavier);
    cands.resize(retain);
    std::sort(cands.begin(), cands.end(), heavier);
    for (const Cand &c : cands) {
      graph.edges.push_back({a[c.ai].first, b[c.bi].first, c.w});
      used[l][c.ai] = true;
      used[l + 1][c.bi] = true;
    }
  }

  for (int l = 0; l < nlayers; ++l)
    for (std::size_t i = 0; i < per_layer[l].size(); ++i)
      if (used[l][i]) graph.layer_nodes[l].push_back(per_layer[l][i].first);
  return graph;
}

GradGraph build_grad_graph(const NetworkSpec &spec, const ParamLayout &layout,
                           const ParamVector &params, std::span<const double> x,
                           int label, double alpha, double presparsify_q) {
  std::vector<double> grad(layout.total);
  per_sample_gradient(spec, layout, params, x, label, grad);
  SparseVec sparse;
  if (presparsify_q >= 0.0) {
    const GradFeature f = percentile_sparsify(grad, presparsify_q);
    sparse = f.to_sparse();
  } else {
    for (std::uint32_t i = 0; i < grad.size(); ++i) {
      if (grad[i] != 0.0) {
        sparse.idx.push_back(i);
        sparse.val.push_back(grad[i]);
      }
    }
  }
  return build_grad_graph(layout, sparse, alpha);
}

std::string export_dot(const GradGraph &graph,
                       const std::vector<std::string> &header_comments) {
  std::ostringstream out;
  for (const std::string &c : header_comments) out << "// " << c << "\n";
  out << "digraph gradgraph {\n";
  out << "  rankdir=LR;\n";
  for (int l = 0; l < graph.num_layers; ++l) {
    out << "  subgraph cluster_layer" << l << " {\n";
    out << "    label=\"layer " << l << "\";\n";
    for (std::uint32_t id : graph.layer_nodes[l])
      out << "    p" << id << " [label=\"p" << id << "\"];\n";
    out << "  }\n";
  }
  char buf[64];
  for (const GradGraph::Edge &e : graph.edges) {
    std::snprintf(buf, sizeof buf, "%.6g", e.weight);
    out << "  p" << e.src << " -> p" << e.dst << " [label=\"" << buf << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

// ---- gradient feature files ------------------------------------------------

namespace {

void put_u32le(std::string &out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u16le(std::string &out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_f64le(std::string &out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

}  // namespace

GradFeatureWriter::GradFeatureWriter(const std::string &path,
                                     const GradFileHeader &header)
    : out_(path, std::ios::binary | std::ios::trunc),
      path_(path),
      dense_len_(header.dense_len) {
  if (!out_) throw ParseError("cannot open " + path + " for writing", 0);
  nlohmann::json j = header.extra.is_object() ? header.extra : nlohmann::json::object();
  j["dense_len"] = header.dense_len;
  j["norm"] = header.norm;
  j["q"] = header.q;
  j["label_mode"] = header.label_mode;
  j["base_hash"] = header.base_hash;
  const std::string hs = j.dump();
  std::string prefix(kGradFileMagic, 4);
  put_u32le(prefix, kGradFileVersion);
  put_u32le(prefix, static_cast<std::uint32_t>(hs.size()));
  prefix += hs;
  out_.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
}

void GradFeatureWriter::write(const GradFeature &feature) {
  if (feature.dense_len != dense_len_)
    throw ConfigError("GradFeatureWriter: feature dense length mismatch");
  feature.validate();
  std::string rec;
  rec.reserve(10 + feature.nnz() * 12);
  put_u32le(rec, static_cast<std::uint32_t>(feature.sample_id));
  put_u16le(rec, static_cast<std::uint16_t>(feature.hyp_label));
  put_u32le(rec, static_cast<std::uint32_t>(feature.nnz()));
  for (std::uint32_t i : feature.indices) put_u32le(rec, i);
  for (double v : feature.values) put_f64le(rec, v);
  out_.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  if (!out_) throw ParseError("short write to " + path_, 0);
  ++written_;
}

void GradFeatureWriter::close() {
  out_.flush();
  out_.close();
}

GradFeatureReader::GradFeatureReader(const std::string &path)
    : in_(path, std::ios::binary), path_(path) {
  if (!in_) throw ParseError("cannot open " + path, 0);
  char magic[4];
  in_.read(magic, 4);
  if (in_.gcount() != 4 || std::memcmp(magic, kGradFileMagic, 4) != 0)
    throw ParseError("bad gradient-file magic in " + path + ", expected \"GRDF\"", 0);
  std::uint8_t word[4];
  in_.read(reinterpret_cast<char *>(word), 4);
  if (in_.gcount() != 4) throw ParseError("truncated gradient-file version", 4);
  const std::uint32_t version = static_cast<std::uint32_t>(word[0]) | (word[1] << 8) |
                                (word[2] << 16) | (static_cast<std::uint32_t>(word[3]) << 24);
  if (version != kGradFileVersion)
    throw ParseError("unsupported gradient-file version " + std::to_string(version), 4);
  in_.read(reinterpret_cast<char *>(word), 4);
  if (in_.gcount() != 4) throw ParseError("truncated gradient-file header length", 8);
  const std::uint32_t hlen = static_cast<std::uint32_t>(word[0]) | (word[1] << 8) |
                             (word[2] << 16) | (static_cast<std::uint32_t>(word[3]) << 24);
  std::string hs(hlen, '\0');
  in_.read(hs.data(), hlen);
  if (in_.gcount() != static_cast<std::streamsize>(hlen))
    throw ParseError("truncated gradient-file header", 12);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception &e) {
    throw ParseError(std::string("gradient-file header is not valid JSON: ") + e.what(), 12);
  }
  header_.dense_len = j.at("dense_len").get<std::uint32_t>();
  header_.norm = j.value("norm", std::vector<std::string>{});
  header_.q = j.value("q", -1.0);
  header_.label_mode = j.value("label_mode", std::string{});
  header_.base_hash = j.value("base_hash", std::string{});
  header_.extra = j;
  offset_ = 12 + hlen;
}

bool GradFeatureReader::next(GradFeature &feature) {
  std::uint8_t head[10];
  in_.read(reinterpret_cast<char *>(head), 10);
  if (in_.gcount() == 0) return false;  // clean EOF
  if (in_.gcount() != 10)
    throw ParseError("truncated gradient record header in " + path_, offset_);
  const std::uint32_t sample = static_cast<std::uint32_t>(head[0]) | (head[1] << 8) |
                               (head[2] << 16) |
                               (static_cast<std::uint32_t>(head[3]) << 24);
  const std::uint16_t hyp = static_cast<std::uint16_t>(head[4] | (head[5] << 8));
  const std::uint32_t nnz = static_cast<std::uint32_t>(head[6]) | (head[7] << 8) |
                            (head[8] << 16) |
                            (static_cast<std::uint32_t>(head[9]) << 24);
  feature.sample_id = sample;
  feature.hyp_label = hyp;
  feature.dense_len = header_.dense_len;
  feature.norm_tag = header_.norm;
  feature.indices.resize(nnz);
  feature.values.resize(nnz);
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(nnz) * 12);
  in_.read(reinterpret_cast<char *>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in_.gcount() != static_cast<std::streamsize>(buf.size()))
    throw ParseError("truncated gradient record body in " + path_, offset_ + 10);
  for (std::uint32_t i = 0; i < nnz; ++i) {
    const std::uint8_t *p = buf.data() + 4 * i;
    feature.indices[i] = static_cast<std::uint32_t>(p[0]) | (p[1] << 8) | (p[2] << 16) |
                         (static_cast<std::uint32_t>(p[3]) << 24);
  }
  const std::uint8_t *vals = buf.data() + 4 * static_cast<std::size_t>(nnz);
  for (std::uint32_t i = 0; i < nnz; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(vals[8 * i + b]) << (8 * b);
    double d;
    std::memcpy(&d, &bits, 8);
    feature.values[i] = d;
  }
  offset_ += 10 + buf.size();
  return true;
}

std::vector<GradFeature> load_grad_features(const std::string &path,
                                            GradFileHeader *header) {
  GradFeatureReader reader(path);
  if (header) *header = reader.header();
  std::vector<GradFeature> out;
  GradFeature f;
  while (reader.next(f)) out.push_back(f);
  return out;
}

}  // namespace grdn
