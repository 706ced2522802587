// tests/test_network.cpp

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

#include <cmath>

#include "grdn/errors.hpp"
#include "grdn/network.hpp"
#include "test_support.hpp"

using namespace grdn;

namespace {

NetworkSpec tiny_spec(int in, std::vector<int> hidden, int classes, std::uint64_t seed) {
  NetworkSpec s;
  s.input_dim = in;
  s.hidden_dims = std::move(hidden);
  s.num_classes = classes;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_SUITE("network") {

TEST_CASE("layout covers the flat vector with weights before biases") {
  const NetworkSpec spec = tiny_spec(784, {300, 100}, 10, 0);
  const ParamLayout layout = ParamLayout::from_spec(spec);
  layout.validate();
  CHECK(layout.total == 266610);  // 784*300+300 + 300*100+100 + 100*10+10
  CHECK(layout.layers.size() == 3);
  CHECK(layout.layers[0].begin == 0);
  CHECK(layout.layers[0].bias_begin() == 784 * 300);
  CHECK(layout.layers[2].end == layout.total);
  CHECK(layout.layer_of(0) == 0);
  CHECK(layout.layer_of(layout.total - 1) == 2);
}

TEST_CASE("init is deterministic with zero biases") {
  const NetworkSpec spec = tiny_spec(5, {7}, 3, 7);
  const ParamVector a = init_params(spec);
  const ParamVector b = init_params(spec);
  CHECK(a == b);

  const ParamLayout layout = ParamLayout::from_spec(spec);
  for (const LayerRange &r : layout.layers)
    for (std::size_t i = 0; i < r.bias_len; ++i)
      CHECK(a[r.bias_begin() + i] == 0.0);

  NetworkSpec other = spec;
  other.seed = 8;
  CHECK(init_params(other) != a);

  // fan-in scaling bound
  const double bound = 1.0 / std::sqrt(5.0);
  for (std::size_t i = 0; i < layout.layers[0].weight_count(); ++i)
    CHECK(std::abs(a[i]) <= bound);
}

TEST_CASE("forward with zero parameters is uniform") {
  const NetworkSpec spec = tiny_spec(4, {6}, 5, 0);
  const ParamLayout layout = ParamLayout::from_spec(spec);
  const ParamVector zeros(layout.total, 0.0);
  Matrix inputs(3, 4);
  for (double &v : inputs.data) v = 0.3;
  const Matrix probs = forward(spec, layout, zeros, inputs);
  for (double p : probs.data) CHECK(p == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("single-layer softmax matches the scalar computation") {
  // W = identity on logits for x = [2, 0]
  const NetworkSpec spec = tiny_spec(2, {}, 2, 0);
  const ParamLayout layout = ParamLayout::from_spec(spec);
  ParamVector params(layout.total, 0.0);
  params[0] = 1.0;  // W(0,0)
  params[3] = 1.0;  // W(1,1)
  Matrix inputs(1, 2);
  inputs(0, 0) = 2.0;
  const Matrix probs = forward(spec, layout, params, inputs);
  CHECK(probs(0, 0) == doctest::Approx(0.8808).epsilon(1e-4));
  CHECK(probs(0, 1) == doctest::Approx(0.1192).epsilon(1e-4));
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    auto c = test::random_net_case(rng, 1500);
    Matrix inputs(4, c.spec.input_dim);
    for (double &v : inputs.data) v = rng.uniform(-2.0, 2.0);
    const Matrix probs = forward(c.spec, c.layout, c.params, inputs);
    for (std::size_t i = 0; i < probs.rows; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < probs.cols; ++j) {
        CHECK(probs(i, j) >= 0.0);
        CHECK(probs(i, j) <= 1.0);
        sum += probs(i, j);
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("loss on known cases") {
  const NetworkSpec spec = tiny_spec(3, {}, 2, 0);
  const ParamLayout layout = ParamLayout::from_spec(spec);
  const ParamVector zeros(layout.total, 0.0);
  SampleBatch batch;
  batch.inputs = Matrix(2, 3);
  batch.labels = {0, 1};
  CHECK(loss(spec, layout, zeros, batch) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // single sample with p(correct) = 0.25 -> ln 4
  const NetworkSpec spec4 = tiny_spec(1, {}, 4, 0);
  const ParamLayout layout4 = ParamLayout::from_spec(spec4);
  const ParamVector zeros4(layout4.total, 0.0);
  SampleBatch one;
  one.inputs = Matrix(1, 1);
  one.labels = {2};
  CHECK(loss(spec4, layout4, zeros4, one) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  // near-one-hot prediction drives the loss toward 0
  ParamVector sharp(layout.total, 0.0);
  sharp[layout.layers[0].bias_begin() + 0] = 60.0;
  SampleBatch sure;
  sure.inputs = Matrix(1, 3);
  sure.labels = {0};
  CHECK(loss(spec, layout, sharp, sure) < 1e-12);

  SampleBatch unlabeled;
  unlabeled.inputs = Matrix(1, 3);
  CHECK_THROWS_AS(loss(spec, layout, zeros, unlabeled), UsageError);

  // confidently wrong prediction stays finite through the probability floor
  SampleBatch wrong;
  wrong.inputs = Matrix(1, 3);
  wrong.labels = {1};
  const double bad = loss(spec, layout, sharp, wrong);
  CHECK(std::isfinite(bad));
  CHECK(bad > 10.0);

  Matrix misshaped(1, 2);
  CHECK_THROWS_AS(forward(spec, layout, zeros, misshaped), ConfigError);
}

TEST_CASE("hand-computed gradient of the zero one-layer net") {
  // W = 0, b = 0, x = [1], 2 classes, label 0: probs - onehot = [-0.5, 0.5],
  // layout order (weights then bias) gives [-0.5, 0.5, -0.5, 0.5].
  const NetworkSpec spec = tiny_spec(1, {}, 2, 0);
  const ParamLayout layout = ParamLayout::from_spec(spec);
  const ParamVector zeros(layout.total, 0.0);
  const std::vector<double> x = {1.0};
  std::vector<double> grad(layout.total);
  per_sample_gradient(spec, layout, zeros, x, 0, grad);
  CHECK(grad[0] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(grad[1] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(grad[2] == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(grad[3] == doctest::Approx(0.5).epsilon(1e-15));

  std::vector<double> again(layout.total);
  per_sample_gradient(spec, layout, zeros, x, 0, again);
  CHECK(grad == again);
}

TEST_CASE("gradient matches central finite differences") {
  Rng rng(1234);
  for (int rep = 0; rep < 10; ++rep) {
    auto c = test::random_net_case(rng);
    std::vector<double> grad(c.layout.total);
    per_sample_gradient(c.spec, c.layout, c.params, c.x, c.label, grad);
    double scale = 0.0;
    for (double g : grad) scale = std::max(scale, std::abs(g));
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
      const std::size_t coord = rng.uniform_index(c.layout.total);
      const double fd =
          test::fd_gradient(c.spec, c.layout, c.params, c.x, c.label, coord);
      worst = std::max(worst, test::rel_err(grad[coord], fd, scale));
    }
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("mean gradient equals the mean of per-sample gradients") {
  Rng rng(99);
  auto c = test::random_net_case(rng, 800);
  SampleBatch batch;
  const std::size_t count = 37;
  batch.inputs = Matrix(count, c.spec.input_dim);
  batch.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = 0; j < batch.inputs.cols; ++j)
      batch.inputs(i, j) = rng.uniform(-1.0, 1.0);
    batch.labels[i] = rng.uniform_int(c.spec.num_classes);
  }

  std::vector<double> mean(c.layout.total);
  mean_gradient(c.spec, c.layout, c.params, batch, mean);

  std::vector<double> expect(c.layout.total, 0.0), g(c.layout.total);
  for (std::size_t i = 0; i < count; ++i) {
    per_sample_gradient(c.spec, c.layout, c.params, batch.inputs.row_span(i),
                        batch.labels[i], g);
    for (std::size_t k = 0; k < g.size(); ++k) expect[k] += g[k];
  }
  for (double &v : expect) v /= static_cast<double>(count);
  for (std::size_t k = 0; k < mean.size(); ++k)
    CHECK(std::abs(mean[k] - expect[k]) <= 1e-12);

  // thread count does not change the bits
  std::vector<double> mt(c.layout.total);
  mean_gradient(c.spec, c.layout, c.params, batch, mt, 2);
  CHECK(mt == mean);
}

TEST_CASE("sgd step") {
  ParamVector p = {1.0};
  sgd_step(p, std::vector<double>{2.0}, 0.1);
  CHECK(p[0] == doctest::Approx(0.8).epsilon(1e-15));

  ParamVector q = {1.0, -2.0};
  sgd_step(q, std::vector<double>{0.0, 0.0}, 0.5);
  CHECK(q[0] == 1.0);
  CHECK(q[1] == -2.0);

  const std::vector<double> bad = {std::nan("")};
  ParamVector r = {0.0};
  CHECK_THROWS_AS(sgd_step(r, bad, 0.1), NumericError);
  CHECK_THROWS_AS(sgd_step(r, std::vector<double>{1.0}, 0.0), ConfigError);
}

TEST_CASE("adam first step magnitude is the learning rate") {
  ParamVector p = {0.0};
  AdamState state;
  AdamParams hp;
  hp.lr = 0.003;
  adam_step(p, std::vector<double>{1.0}, state, hp);
  CHECK(p[0] == doctest::Approx(-hp.lr).epsilon(1e-7));
  CHECK(state.t == 1);
}

TEST_CASE("training trajectory is bit-reproducible") {
  Rng rng(5150);
  auto c = test::random_net_case(rng, 500);
  SampleBatch batch;
  batch.inputs = Matrix(16, c.spec.input_dim);
  batch.labels.resize(16);
  for (std::size_t i = 0; i < 16; ++i) {
    for (std::size_t j = 0; j < batch.inputs.cols; ++j)
      batch.inputs(i, j) = rng.uniform(0.0, 1.0);
    batch.labels[i] = rng.uniform_int(c.spec.num_classes);
  }
  auto run = [&] {
    ParamVector p = init_params(c.spec);
    std::vector<double> g(c.layout.total);
    for (int step = 0; step < 5; ++step) {
      mean_gradient(c.spec, c.layout, p, batch, g);
      sgd_step(p, g, 0.1);
    }
    return p;
  };
  CHECK(run() == run());
}

}  // TEST_SUITE
