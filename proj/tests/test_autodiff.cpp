// Copyright 2026 The DnS Retrieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "dns/error.hpp"
#include "dns/graph.hpp"
#include "support.hpp"

using dns::Rng;
using dns::ad::Graph;
using dns::ad::Shape;
using dns::ad::Tensor;
using dns::ad::Var;
using dns::test::gradient_sweep;
using dns::test::random_tensor;
using dns::test::weighted_sum;

TEST_CASE("matmul with identity returns the right operand") {
  Graph g;
  auto a = g.leaf("a", Tensor::from({2, 2}, {1, 0, 0, 1}));
  auto b = g.leaf("b", Tensor::from({2, 1}, {2, 3}));
  g.mark_output("y", g.matmul(a, b));
  const auto out = g.forward();
  CHECK(out.at("y") == Tensor::from({2, 1}, {2, 3}));
}

TEST_CASE("htanh clamps and has zero slope when saturated") {
  Graph g;
  auto x = g.leaf("x", Tensor::scalar(1.7), true);
  g.mark_output("y", g.htanh(x));
  CHECK(g.forward().at("y").item() == 1.0);
  CHECK(g.backward(Tensor::scalar(1.0)).at("x").item() == 0.0);
  g.forward({{"x", Tensor::scalar(2.0)}});
  CHECK(g.backward(Tensor::scalar(1.0)).at("x").item() == 0.0);
}

TEST_CASE("erf of zero is zero") {
  Graph g;
  auto x = g.leaf("x", Tensor::scalar(0.0));
  g.mark_output("y", g.erf(x, 1.0 / std::sqrt(2.0 * 1e-6)));
  CHECK(g.forward().at("y").item() == 0.0);
}

TEST_CASE("square gradient") {
  Graph g;
  auto x = g.leaf("x", Tensor::scalar(3.0), true);
  g.mark_output("y", g.mul(x, x));
  g.forward();
  CHECK(g.backward(Tensor::scalar(1.0)).at("x").item() == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("backward before forward is rejected") {
  Graph g;
  auto x = g.leaf("x", Tensor::scalar(1.0), true);
  g.mark_output("y", g.square(x));
  CHECK_THROWS_WITH_AS(g.backward(Tensor::scalar(1.0)), doctest::Contains("before forward"),
                       dns::Error);
}

TEST_CASE("shape errors name the op and shapes") {
  Graph g;
  auto a = g.leaf("a", Tensor(Shape{2, 3}));
  auto b = g.leaf("b", Tensor(Shape{2, 3}));
  try {
    g.matmul(a, b);
    FAIL("expected a shape error");
  } catch (const dns::ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("matmul") != std::string::npos);
    CHECK(what.find("[2,3]") != std::string::npos);
  }
}

TEST_CASE("gradients exist only for requires_grad leaves") {
  Graph g;
  auto a = g.leaf("a", Tensor::from({2}, {1, 2}), true);
  auto b = g.leaf("b", Tensor::from({2}, {3, 4}), false);
  g.mark_output("y", g.sum_all(g.mul(a, b)));
  g.forward();
  const auto grads = g.backward(Tensor::scalar(1.0));
  CHECK(grads.count("a") == 1);
  CHECK(grads.count("b") == 0);
  CHECK(grads.at("a") == Tensor::from({2}, {3, 4}));
}

TEST_CASE("constant graph has zero finite-difference error") {
  Graph g;
  auto x = g.leaf("x", Tensor::from({3}, {1, 2, 3}), true);
  auto c = g.constant(Tensor::scalar(5.0));
  (void)x;
  g.mark_output("y", g.add_scalar(c, 1.0));
  CHECK(dns::ad::finite_difference_check(g, "x", 1e-5) == 0.0);
}

TEST_CASE("finite-difference check requires a scalar output") {
  Graph g;
  auto x = g.leaf("x", Tensor::from({2}, {1, 2}), true);
  g.mark_output("y", g.square(x));
  CHECK_THROWS_AS(dns::ad::finite_difference_check(g, "x", 1e-5), dns::ShapeError);
}

TEST_CASE("matmul plus sum passes a tight finite-difference check") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Graph g;
    auto a = g.leaf("a", random_tensor(rng, {3, 4}), true);
    auto b = g.leaf("b", random_tensor(rng, {4, 2}), true);
    g.mark_output("y", g.sum_all(g.matmul(a, b)));
    CHECK(dns::ad::finite_difference_check(g, "a", 1e-5) <= 1e-7);
    CHECK(dns::ad::finite_difference_check(g, "b", 1e-5) <= 1e-7);
  }
}

TEST_CASE("tensordot contracts arbitrary axes") {
  Rng rng(3);
  const auto a = random_tensor(rng, {2, 3, 4});
  const auto b = random_tensor(rng, {4, 5, 3});
  Graph g;
  auto va = g.leaf("a", a);
  auto vb = g.leaf("b", b);
  g.mark_output("y", g.tensordot(va, vb, {1, 2}, {2, 0}));
  const auto y = g.forward().at("y");
  REQUIRE(y.shape() == Shape{2, 5});
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t m = 0; m < 5; ++m) {
      double ref = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        for (std::size_t k = 0; k < 4; ++k) ref += a[(i * 3 + j) * 4 + k] * b[(k * 5 + m) * 3 + j];
      }
      CHECK(y[i * 5 + m] == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("max reductions route the gradient to the first maximal index") {
  Graph g;
  auto x = g.leaf("x", Tensor::from({2, 3}, {1, 5, 5, 2, 2, 0}), true);
  g.mark_output("y", g.sum_all(g.max(x, 1)));
  g.forward();
  CHECK(g.backward(Tensor::scalar(1.0)).at("x") == Tensor::from({2, 3}, {0, 1, 0, 1, 0, 0}));
}

TEST_CASE("max pooling routes one gradient per window, first index on ties") {
  Graph g;
  auto x = g.leaf("x", Tensor::from({1, 3, 3}, {1, 1, 0, 1, 1, 0, 7, 3, 9}), true);
  auto y = g.max_pool2d(x);
  CHECK(g.shape(y) == Shape{1, 2, 2});
  g.mark_output("y", g.sum_all(y));
  const auto out = g.forward();
  CHECK(out.at("y").item() == 1 + 0 + 7 + 9);
  const auto grad = g.backward(Tensor::scalar(1.0)).at("x");
  CHECK(grad == Tensor::from({1, 3, 3}, {1, 0, 1, 0, 0, 0, 1, 0, 1}));
}

TEST_CASE("forward is bit-reproducible") {
  Rng rng(5);
  const auto x = random_tensor(rng, {2, 4, 4});
  const auto w = random_tensor(rng, {3, 2, 3, 3});
  const auto b = random_tensor(rng, {3});
  auto run = [&] {
    Graph g;
    auto y = g.conv2d(g.leaf("x", x), g.leaf("w", w), g.leaf("b", b));
    g.mark_output("y", g.softmax(g.reshape(g.max_pool2d(g.relu(y)), {3, 4})));
    return g.forward().at("y");
  };
  const auto first = run();
  const auto second = run();
  REQUIRE(first.size() == second.size());
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(first[i] == second[i]);
}

TEST_CASE("leaf rebinding validates shapes") {
  Graph g;
  auto x = g.leaf("x", Tensor::from({2}, {1, 2}));
  g.mark_output("y", g.sum_all(x));
  CHECK_THROWS_AS(g.forward({{"x", Tensor(Shape{3})}}), dns::ShapeError);
  CHECK_THROWS_AS(g.forward({{"nope", Tensor(Shape{2})}}), dns::Error);
}

namespace {

using Builder = std::function<Var(Graph&, Rng&)>;

Var input(Graph& g, Rng& rng, const char* name, Shape shape, double scale = 1.0) {
  return g.leaf(name, random_tensor(rng, std::move(shape), scale), true);
}

Var positive(Graph& g, Var x) { return g.add_scalar(g.square(x), 0.5); }

std::vector<std::pair<const char*, Builder>> op_builders() {
  std::vector<std::pair<const char*, Builder>> b;
  b.emplace_back("add-broadcast", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.add(input(g, r, "a", {3, 4}), input(g, r, "b", {4})), r);
  });
  b.emplace_back("sub", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.sub(input(g, r, "a", {2, 3}), input(g, r, "b", {2, 1})), r);
  });
  b.emplace_back("mul-broadcast", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.mul(input(g, r, "a", {2, 3, 2}), input(g, r, "b", {3, 1})), r);
  });
  b.emplace_back("div", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.div(input(g, r, "a", {3, 2}), positive(g, input(g, r, "b", {2}))), r);
  });
  b.emplace_back("scale+shift", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.add_scalar(g.scale(input(g, r, "a", {5}), -1.5), 0.3), r);
  });
  b.emplace_back("htanh", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.htanh(input(g, r, "a", {6}, 1.5)), r);
  });
  b.emplace_back("tanh", [](Graph& g, Rng& r) { return weighted_sum(g, g.tanh(input(g, r, "a", {6})), r); });
  b.emplace_back("sigmoid", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.sigmoid(input(g, r, "a", {6})), r);
  });
  b.emplace_back("relu", [](Graph& g, Rng& r) { return weighted_sum(g, g.relu(input(g, r, "a", {6})), r); });
  b.emplace_back("abs", [](Graph& g, Rng& r) { return weighted_sum(g, g.abs(input(g, r, "a", {6})), r); });
  b.emplace_back("exp", [](Graph& g, Rng& r) { return weighted_sum(g, g.exp(input(g, r, "a", {6})), r); });
  b.emplace_back("log", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.log(positive(g, input(g, r, "a", {6}))), r);
  });
  b.emplace_back("sqrt", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.sqrt(positive(g, input(g, r, "a", {6}))), r);
  });
  b.emplace_back("erf", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.erf(input(g, r, "a", {6}), 0.8), r);
  });
  b.emplace_back("matmul", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.matmul(input(g, r, "a", {2, 3}), input(g, r, "b", {3, 4})), r);
  });
  b.emplace_back("transpose", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.transpose(input(g, r, "a", {2, 3})), r);
  });
  b.emplace_back("permute", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.permute(input(g, r, "a", {2, 3, 4}), {2, 0, 1}), r);
  });
  b.emplace_back("reshape", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.reshape(input(g, r, "a", {2, 6}), {3, 4}), r);
  });
  b.emplace_back("tensordot", [](Graph& g, Rng& r) {
    return weighted_sum(
        g, g.tensordot(input(g, r, "a", {2, 3, 4}), input(g, r, "b", {3, 2, 4}), {2}, {2}), r);
  });
  b.emplace_back("concat", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.concat({input(g, r, "a", {2, 3}), input(g, r, "b", {2, 2})}, 1), r);
  });
  b.emplace_back("slice", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.slice(input(g, r, "a", {4, 3}), 0, 1, 2), r);
  });
  b.emplace_back("index_select", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.index_select(input(g, r, "a", {3, 2}), 0, {2, 0, 0, 1}), r);
  });
  b.emplace_back("sum-axis", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.sum(input(g, r, "a", {2, 3, 4}), 1), r);
  });
  b.emplace_back("mean-axis", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.mean(input(g, r, "a", {2, 3, 4}), 2), r);
  });
  b.emplace_back("max-axis", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.max(input(g, r, "a", {3, 4}), 1), r);
  });
  b.emplace_back("sum_all", [](Graph& g, Rng& r) {
    return g.sum_all(g.square(input(g, r, "a", {2, 3})));
  });
  b.emplace_back("mean_all", [](Graph& g, Rng& r) {
    return g.mean_all(g.tanh(input(g, r, "a", {2, 3})));
  });
  b.emplace_back("softmax", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.softmax(input(g, r, "a", {2, 5})), r);
  });
  b.emplace_back("layer_norm", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.layer_norm(input(g, r, "a", {3, 5})), r);
  });
  b.emplace_back("batch_norm", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.batch_norm(input(g, r, "a", {6, 3})), r);
  });
  b.emplace_back("l2_normalize", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.l2_normalize(input(g, r, "a", {3, 4})), r);
  });
  b.emplace_back("conv2d", [](Graph& g, Rng& r) {
    return weighted_sum(
        g, g.conv2d(input(g, r, "x", {2, 4, 5}), input(g, r, "w", {3, 2, 3, 3}), input(g, r, "b", {3})),
        r);
  });
  b.emplace_back("max_pool2d", [](Graph& g, Rng& r) {
    return weighted_sum(g, g.max_pool2d(input(g, r, "a", {2, 5, 3})), r);
  });
  b.emplace_back("bce_with_logits", [](Graph& g, Rng& r) {
    std::vector<double> t(6);
    for (auto& v : t) v = r.bernoulli(0.5) ? 1.0 : 0.0;
    return g.bce_with_logits(input(g, r, "a", {6}), g.constant(Tensor({6}, t)));
  });
  return b;
}

}  // namespace

TEST_CASE("every op passes finite-difference checks on 100 random inputs") {
  Rng rng(2024);
  for (const auto& [name, build] : op_builders()) {
    CAPTURE(name);
    CHECK(gradient_sweep(rng, 100, build) <= 1e-5);
  }
}
