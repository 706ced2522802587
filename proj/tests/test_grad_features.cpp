// tests/test_grad_features.cpp

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

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

#include "grdn/errors.hpp"
#include "grdn/grad_features.hpp"
#include "test_support.hpp"

using namespace grdn;

TEST_SUITE("grad_features") {

TEST_CASE("ceil_count guards exact products") {
  CHECK(ceil_count(0.1, 70) == 7);
  CHECK(ceil_count(0.1, 71) == 8);
  CHECK(ceil_count(1.0, 13) == 13);
  CHECK(ceil_count(0.85, 100) == 85);
  CHECK(ceil_count(0.5, 3) == 2);
  CHECK(percentile_rank(0.0, 10) == 1);
  CHECK(percentile_rank(50.0, 4) == 2);
  CHECK(percentile_rank(99.0, 100) == 99);
}

TEST_CASE("extraction cardinality and determinism") {
  Rng rng(5);
  auto c = test::random_net_case(rng, 400);
  SampleBatch batch;
  const std::size_t count = 6;
  batch.inputs = Matrix(count, c.spec.input_dim);
  batch.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < batch.inputs.cols; ++j)
      batch.inputs(i, j) = rng.uniform(0.0, 1.0);
    batch.labels[i] = rng.uniform_int(c.spec.num_classes);
  }

  const auto all = extract_gradients(c.spec, c.layout, c.params, batch,
                                     LabelMode::all_labels, 0);
  CHECK(all.size() == count * static_cast<std::size_t>(c.spec.num_classes));

  const auto r1 = extract_gradients(c.spec, c.layout, c.params, batch,
                                    LabelMode::random_labels, 99);
  const auto r2 = extract_gradients(c.spec, c.layout, c.params, batch,
                                    LabelMode::random_labels, 99);
  REQUIRE(r1.size() == count);
  for (std::size_t i = 0; i < count; ++i) {
    CHECK(r1[i].hyp_label == r2[i].hyp_label);
    CHECK(r1[i].values == r2[i].values);
  }

  // every feature equals the per-sample gradient at (x, hyp)
  std::vector<double> g(c.layout.total);
  for (const GradFeature &f : all) {
    per_sample_gradient(c.spec, c.layout, c.params,
                        batch.inputs.row_span(static_cast<std::size_t>(f.sample_id)),
                        f.hyp_label, g);
    CHECK(f.values == g);
  }

  const auto truth = extract_gradients(c.spec, c.layout, c.params, batch,
                                       LabelMode::true_labels, 0);
  for (std::size_t i = 0; i < count; ++i) CHECK(truth[i].hyp_label == batch.labels[i]);
}

TEST_CASE("percentile keeps entries strictly above the nearest-rank threshold") {
  const std::vector<double> v = {0.1, -0.5, 0.2, 0.9};
  const GradFeature f = percentile_sparsify(v, 50.0);
  REQUIRE(f.nnz() == 2);
  CHECK(f.indices == std::vector<std::uint32_t>{1, 3});
  CHECK(f.values == std::vector<double>{-0.5, 0.9});
  f.validate();

  // q = 0 drops only the minimum-magnitude ties; zeros never survive
  const std::vector<double> with_zeros = {0.0, 0.3, 0.0, -0.2};
  const GradFeature f0 = percentile_sparsify(with_zeros, 0.0);
  CHECK(f0.indices == std::vector<std::uint32_t>{1, 3});

  const std::vector<double> distinct = {4.0, 1.0, 3.0, 2.0};
  const GradFeature fd = percentile_sparsify(distinct, 0.0);
  CHECK(fd.nnz() == 3);  // the single minimum is dropped
  CHECK(fd.indices == std::vector<std::uint32_t>{0, 2, 3});

  CHECK_THROWS_AS(percentile_sparsify(v, 100.0), ConfigError);
  CHECK_THROWS_AS(percentile_sparsify(v, -1.0), ConfigError);
}

TEST_CASE("percentile retained counts are exact for distinct magnitudes") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 20 + rng.uniform_index(200);
    std::vector<double> v(n);
    for (double &x : v) x = rng.normal();  // distinct almost surely
    for (double q : {99.0, 95.0, 90.0, 85.0, 80.0, 70.0}) {
      const GradFeature f = percentile_sparsify(v, q);
      CHECK(f.nnz() == n - percentile_rank(q, n));
      // retained fraction property
      CHECK(static_cast<double>(f.nnz()) <=
            (100.0 - q) / 100.0 * static_cast<double>(n) + 1.0);
    }
  }
}

TEST_CASE("percentile keep-sets nest monotonically in q") {
  Rng rng(9);
  std::vector<double> v(150);
  for (double &x : v) x = rng.normal();
  std::vector<double> qs = {0.0, 30.0, 55.0, 70.0, 85.0, 95.0, 99.0};
  std::vector<std::set<std::uint32_t>> kept;
  for (double q : qs) {
    const GradFeature f = percentile_sparsify(v, q);
    kept.emplace_back(f.indices.begin(), f.indices.end());
  }
  for (std::size_t i = 1; i < kept.size(); ++i)
    CHECK(std::includes(kept[i - 1].begin(), kept[i - 1].end(), kept[i].begin(),
                        kept[i].end()));
  // sparsification never changes retained values
  const GradFeature f = percentile_sparsify(v, 85.0);
  for (std::size_t i = 0; i < f.nnz(); ++i) CHECK(f.values[i] == v[f.indices[i]]);
}

TEST_CASE("label masks pick the top coordinates per label") {
  // two labels with disjoint dominant coordinate blocks
  const std::uint32_t n = 20;
  std::vector<GradFeature> feats;
  for (int rep = 0; rep < 3; ++rep) {
    for (int label = 0; label < 2; ++label) {
      GradFeature f;
      f.dense_len = n;
      f.hyp_label = label;
      f.sample_id = rep * 2 + label;
      for (std::uint32_t i = 0; i < n; ++i) {
        f.indices.push_back(i);
        const bool dominant = label == 0 ? i < 10 : i >= 10;
        f.values.push_back(dominant ? 5.0 + i : 0.01);
      }
      feats.push_back(std::move(f));
    }
  }
  const LabelMask mask = fit_label_masks(feats, 0.10);
  REQUIRE(mask.masks.count(0) == 1);
  REQUIRE(mask.masks.count(1) == 1);
  CHECK(mask.masks.at(0).size() == 2);  // ceil(0.10 * 20)
  CHECK(mask.masks.at(1).size() == 2);
  for (std::uint32_t i : mask.masks.at(0)) CHECK(i < 10);
  for (std::uint32_t i : mask.masks.at(1)) CHECK(i >= 10);

  // keep_fraction 1.0 is the identity on indices
  const LabelMask full = fit_label_masks(feats, 1.0);
  const GradFeature masked = apply_label_mask(full, feats[0]);
  CHECK(masked.indices == feats[0].indices);
  CHECK(masked.values == feats[0].values);

  GradFeature unseen = feats[0];
  unseen.hyp_label = 9;
  CHECK_THROWS_AS(apply_label_mask(mask, unseen), UsageError);
}

TEST_CASE("mask composed with percentile is index-set intersection") {
  Rng rng(13);
  const std::uint32_t n = 64;
  std::vector<double> dense(n);
  for (double &x : dense) x = rng.normal();

  std::vector<GradFeature> fit;
  GradFeature proto;
  proto.dense_len = n;
  proto.hyp_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    proto.indices.push_back(i);
    proto.values.push_back(rng.normal());
  }
  fit.push_back(proto);
  const LabelMask mask = fit_label_masks(fit, 0.25);

  const GradFeature sparse = percentile_sparsify(dense, 60.0);
  const GradFeature composed = apply_label_mask(mask, sparse);

  std::set<std::uint32_t> expect;
  const auto &mset = mask.masks.at(0);
  std::set<std::uint32_t> keepers(sparse.indices.begin(), sparse.indices.end());
  for (std::uint32_t i : mset)
    if (keepers.count(i)) expect.insert(i);
  const std::set<std::uint32_t> got(composed.indices.begin(), composed.indices.end());
  CHECK(got == expect);
  // idempotent
  const GradFeature twice = apply_label_mask(mask, composed);
  CHECK(twice.indices == composed.indices);
}

TEST_CASE("normalization steps match hand arithmetic") {
  const auto make = [](std::vector<double> vals) {
    GradFeature f;
    f.dense_len = static_cast<std::uint32_t>(vals.size());
    for (std::uint32_t i = 0; i < vals.size(); ++i) f.indices.push_back(i);
    f.values = std::move(vals);
    return f;
  };

  NormPipeline p1{parse_norm_steps({"power(1)"}), {}};
  const GradFeature id = p1.apply(make({0.4, -0.2}));
  CHECK(id.values[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(id.values[1] == doctest::Approx(-0.2).epsilon(1e-15));

  NormPipeline phalf{parse_norm_steps({"power(0.5)"}), {}};
  const GradFeature sq = phalf.apply(make({4.0, -9.0}));
  CHECK(sq.values[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(sq.values[1] == doctest::Approx(-3.0).epsilon(1e-12));

  NormPipeline scale{parse_norm_steps({"scale"}), {}};
  const GradFeature sc = scale.apply(make({2.0, -4.0}));
  CHECK(sc.values[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(sc.values[1] == doctest::Approx(-1.0).epsilon(1e-15));

  NormPipeline combo{parse_norm_steps({"scale", "power(0.5)"}), {}};
  const GradFeature sp = combo.apply(make({2.0, -4.0}));
  CHECK(sp.values[0] == doctest::Approx(0.7071).epsilon(1e-4));
  CHECK(sp.values[1] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(sp.norm_tag == std::vector<std::string>{"scale", "power(0.5)"});

  NormPipeline l2{parse_norm_steps({"l2"}), {}};
  const GradFeature unit = l2.apply(make({3.0, 4.0}));
  CHECK(std::sqrt(dot(unit.values, unit.values)) == doctest::Approx(1.0).epsilon(1e-12));
  const GradFeature zero = l2.apply(make({0.0, 0.0}));
  CHECK(zero.values == std::vector<double>{0.0, 0.0});

  // order sensitivity: scale->power != power->scale on a generic fixture
  NormPipeline ab{parse_norm_steps({"scale", "power(0.5)"}), {}};
  NormPipeline ba{parse_norm_steps({"power(0.5)", "scale"}), {}};
  const GradFeature fa = ab.apply(make({0.09, 0.5, -1.5}));
  const GradFeature fb = ba.apply(make({0.09, 0.5, -1.5}));
  CHECK(fa.values != fb.values);

  CHECK_THROWS_AS(parse_norm_steps({"power(0)"}), ConfigError);
  CHECK_THROWS_AS(parse_norm_steps({"bogus"}), ConfigError);
}

TEST_CASE("standard norm needs fitted statistics and z-scores the coordinates") {
  GradFeature a;
  a.dense_len = 3;
  a.indices = {0, 2};
  a.values = {1.0, 5.0};
  GradFeature b = a;
  b.values = {3.0, 5.0};

  NormPipeline p{parse_norm_steps({"standard"}), {}};
  CHECK_THROWS_AS(p.apply(a), UsageError);

  p.stats.init(3);
  p.stats.add(a);
  p.stats.add(b);
  // coordinate 0 over present values {1,3}: mean 2, population std 1
  const GradFeature za = p.apply(a);
  CHECK(za.values[0] == doctest::Approx(-1.0).epsilon(1e-12));
  // coordinate 2 is constant over the fit set: emits 0
  CHECK(za.values[1] == 0.0);
  // coordinate never seen at fit time passes through
  GradFeature c;
  c.dense_len = 3;
  c.indices = {1};
  c.values = {0.7};
  CHECK(p.apply(c).values[0] == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("gradient graph on a constructed fixture") {
  // Two layers (2x2 each, plus biases): layout from a 2-2-2 network.
  NetworkSpec spec;
  spec.input_dim = 2;
  spec.hidden_dims = {2};
  spec.num_classes = 2;
  const ParamLayout layout = ParamLayout::from_spec(spec);
  REQUIRE(layout.layers.size() == 2);

  // single nonzero per layer -> exactly one edge per layer pair
  SparseVec single;
  single.idx = {1, static_cast<std::uint32_t>(layout.layers[1].begin + 2)};
  single.val = {0.5, -2.0};
  const GradGraph g1 = build_grad_graph(layout, single, 1.0);
  CHECK(g1.edges.size() == 1);
  CHECK(g1.edges[0].src == 1);
  CHECK(g1.edges[0].dst == layout.layers[1].begin + 2);
  CHECK(g1.edges[0].weight == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(g1.pair_candidates == std::vector<std::size_t>{1});
  CHECK(g1.pair_retained == std::vector<std::size_t>{1});

  // alpha = 1 keeps every nonzero-pair edge
  SparseVec grad;
  for (std::uint32_t i = 0; i < layout.layers[0].end; ++i) {
    grad.idx.push_back(i);
    grad.val.push_back(0.1 + i);
  }
  for (std::uint32_t i = 0; i < 3; ++i) {
    grad.idx.push_back(static_cast<std::uint32_t>(layout.layers[1].begin + i));
    grad.val.push_back(1.0 + i);
  }
  const GradGraph full = build_grad_graph(layout, grad, 1.0);
  CHECK(full.edges.size() == layout.layers[0].size() * 3);

  // alpha = 0.1 keeps ceil(0.1 * candidates) per pair
  const GradGraph tenth = build_grad_graph(layout, grad, 0.1);
  const std::size_t cand = layout.layers[0].size() * 3;
  CHECK(tenth.pair_retained == std::vector<std::size_t>{ceil_count(0.1, cand)});
  CHECK(tenth.edges.size() == ceil_count(0.1, cand));
  // edges are ordered by descending magnitude within the pair
  for (std::size_t i = 1; i < tenth.edges.size(); ++i)
    CHECK(std::abs(tenth.edges[i - 1].weight) >= std::abs(tenth.edges[i].weight));

  CHECK_THROWS_AS(build_grad_graph(layout, grad, 0.0), ConfigError);
  CHECK_THROWS_AS(build_grad_graph(layout, grad, 1.5), ConfigError);
}

TEST_CASE("DOT export re-parses with consistent nodes and layers") {
  NetworkSpec spec;
  spec.input_dim = 3;
  spec.hidden_dims = {3};
  spec.num_classes = 2;
  spec.seed = 4;
  const ParamLayout layout = ParamLayout::from_spec(spec);
  const ParamVector params = init_params(spec);
  Rng rng(6);
  std::vector<double> x(3);
  for (double &v : x) v = rng.uniform(0.1, 1.0);

  const GradGraph graph =
      build_grad_graph(spec, layout, params, x, 1, 0.25, -1.0);
  const std::string dot = export_dot(graph, {"fixture"});

  // re-parse: node declarations and edges
  std::set<std::string> nodes;
  std::regex node_re(R"(^\s+(p\d+) \[label=)");
  std::regex edge_re(R"(^\s+(p\d+) -> (p\d+) \[label=\"([^\"]+)\"\];)");
  std::set<std::string> edge_endpoints;
  std::size_t edge_count = 0;
  std::istringstream lines(dot);
  std::string line;
  int cluster = -1;
  std::map<std::string, int> node_layer;
  while (std::getline(lines, line)) {
    std::smatch m;
    if (line.find("subgraph cluster_layer") != std::string::npos) ++cluster;
    if (std::regex_search(line, m, node_re)) {
      nodes.insert(m[1]);
      node_layer[m[1]] = cluster;
    } else if (std::regex_search(line, m, edge_re)) {
      ++edge_count;
      edge_endpoints.insert(m[1]);
      edge_endpoints.insert(m[2]);
      // every edge crosses one layer boundary forward
      CHECK(node_layer.at(m[2]) == node_layer.at(m[1]) + 1);
    }
  }
  CHECK(edge_count == graph.edges.size());
  CHECK(nodes == edge_endpoints);
  std::size_t declared = 0;
  for (const auto &ln : graph.layer_nodes) declared += ln.size();
  CHECK(nodes.size() == declared);
  CHECK(dot.rfind("// fixture\n", 0) == 0);
}

TEST_CASE("gradient feature files round-trip and reject corruption") {
  const std::string dir = test::temp_dir("grdf");
  const std::string path = dir + "/f.grdf";

  GradFileHeader header;
  header.dense_len = 100;
  header.norm = {"scale", "power(0.5)"};
  header.q = 85.0;
  header.label_mode = "random";
  header.base_hash = "00ff00ff00ff00ff";
  header.extra = {{"config_hash", "beef"}};

  std::vector<GradFeature> feats;
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    GradFeature f;
    f.sample_id = i;
    f.hyp_label = i % 3;
    f.dense_len = 100;
    for (std::uint32_t k = 0; k < 100; k += 7 + i) {
      f.indices.push_back(k);
      f.values.push_back(rng.normal());
    }
    feats.push_back(std::move(f));
  }

  {
    GradFeatureWriter writer(path, header);
    for (const GradFeature &f : feats) writer.write(f);
    CHECK(writer.written() == feats.size());
    writer.close();
  }

  GradFileHeader back;
  const std::vector<GradFeature> loaded = load_grad_features(path, &back);
  CHECK(back.dense_len == 100);
  CHECK(back.norm == header.norm);
  CHECK(back.q == 85.0);
  CHECK(back.base_hash == header.base_hash);
  REQUIRE(loaded.size() == feats.size());
  for (std::size_t i = 0; i < feats.size(); ++i) {
    CHECK(loaded[i].sample_id == feats[i].sample_id);
    CHECK(loaded[i].hyp_label == feats[i].hyp_label);
    CHECK(loaded[i].indices == feats[i].indices);
    CHECK(loaded[i].values == feats[i].values);
  }

  // truncation mid-record is a parse error
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() - 3);
    std::ofstream out(dir + "/cut.grdf", std::ios::binary);
    out << bytes;
  }
  CHECK_THROWS_AS(load_grad_features(dir + "/cut.grdf"), ParseError);
}

}  // TEST_SUITE
