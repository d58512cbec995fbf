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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "blocks.hpp"
#include "doctest.h"
#include "dns/error.hpp"
#include "dns/models.hpp"
#include "dns/similarity.hpp"
#include "support.hpp"

using namespace dns;
using models::Binder;
using models::ParamSet;

namespace {

ad::Tensor eval_node(const ParamSet& p, const std::function<ad::Var(ad::Graph&, Binder&)>& build) {
  ad::Graph g;
  Binder b(g, p, false);
  g.mark_output("y", build(g, b));
  return g.forward().at("y");
}

}  // namespace

TEST_CASE("l2 attention weights follow alignment with the context vector") {
  ParamSet p;
  p["a.u"] = ad::Tensor::from({3}, {0, 2, 0});
  const RegionFeatureTensor x("x", 1, 2, 3, {0, 1, 0, 0, -1, 0});
  const auto y = eval_node(p, [&](ad::Graph& g, Binder& b) { return models::l2_attention(b, "a", models::video_constant(g, x)); });
  CHECK(y[1] == doctest::Approx(1.0));
  for (std::size_t i = 3; i < 6; ++i) CHECK(y[i] == 0.0);

  Rng rng(1);
  ParamSet q;
  models::init_l2_attention(q, "a", 8, rng);
  const auto v = test::random_video(rng, 4, 3, 8);
  const auto w = eval_node(q, [&](ad::Graph& g, Binder& b) { return models::l2_attention(b, "a", models::video_constant(g, v)); });
  for (std::size_t r = 0; r < 12; ++r) {
    double n = 0.0;
    for (std::size_t d = 0; d < 8; ++d) n += w[r * 8 + d] * w[r * 8 + d];
    CHECK(std::sqrt(n) <= 1.0 + 1e-9);
  }
}

TEST_CASE("h attention with zero hidden layer weighs every region by one half") {
  Rng rng(2);
  ParamSet p;
  models::init_h_attention(p, "a", 5, rng);
  p["a.W"] = ad::Tensor({5, 5});
  p["a.b"] = ad::Tensor({5});
  const auto x = test::random_video(rng, 3, 2, 5);
  const auto w = eval_node(p, [&](ad::Graph& g, Binder& b) {
    return models::h_attention_weights(b, "a", models::video_constant(g, x));
  });
  for (double v : w.values()) CHECK(v == 0.5);
}

TEST_CASE("binarization surrogate values") {
  ParamSet p;
  const double sigma = 1e-3;
  p["h.W"] = ad::Tensor::from({1, 3}, {0.0, sigma, -0.4});
  const RegionFeatureTensor x("x", 1, 1, 1, {1.0f});
  const auto y = eval_node(p, [&](ad::Graph& g, Binder& b) {
    return models::binarize_train(b, "h", models::video_constant(g, x), sigma);
  });
  CHECK(y[0] == 0.0);
  CHECK(y[1] == doctest::Approx(std::erf(1.0 / std::numbers::sqrt2)).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.6827).epsilon(1e-4));
  CHECK(y[2] == -1.0);

  ParamSet s;
  s["bin.hash.W"] = ad::Tensor::from({1, 2}, {-0.4, 0.0});
  const auto codes = std::get<BinaryCodeTensor>(models::extract_fine(s, models::StudentKind::kBinary, x));
  CHECK(codes.code(0, 0, 0) == -1);
  CHECK(codes.code(0, 0, 1) == 1);
}

TEST_CASE("erf surrogate approaches the sign as sigma shrinks") {
  for (double x : {-2.0, -0.3, 0.01, 1.5}) {
    const double sigma = std::abs(x) / 10.0;
    CHECK(std::abs(std::erf(x / std::sqrt(2.0 * sigma * sigma)) - (x > 0 ? 1.0 : -1.0)) <= 1e-6);
  }
}

TEST_CASE("train and eval binarization agree away from zero") {
  Rng rng(3);
  ParamSet p;
  models::init_binarization(p, "bin.hash", 8, 64, rng);
  const auto x = test::random_video(rng, 3, 2, 8);
  const auto soft = eval_node(p, [&](ad::Graph& g, Binder& b) {
    return models::binarize_train(b, "bin.hash", models::video_constant(g, x));
  });
  const auto pre = eval_node(p, [&](ad::Graph& g, Binder& b) {
    return g.matmul(g.reshape(models::video_constant(g, x), {6, 8}), b("bin.hash.W"));
  });
  const auto hard = unpack_codes(std::get<BinaryCodeTensor>(models::extract_fine(p, models::StudentKind::kBinary, x)));
  std::size_t compared = 0;
  for (std::size_t i = 0; i < pre.size(); ++i) {
    if (std::abs(pre[i]) <= 3 * models::kBinarizationSigma) continue;
    CHECK((soft[i] > 0) == (hard[i] > 0));
    ++compared;
  }
  CHECK(compared > pre.size() / 2);
}

TEST_CASE("pass-through comparator max-pools 4x4 blocks of a non-negative matrix") {
  Rng rng(4);
  ParamSet p;
  models::init_comparator(p, "vc", rng, true, 0.0);
  SimilarityMatrix m(8, 8);
  for (auto& v : m.values) v = static_cast<float>(rng.uniform());
  const auto out = models::comparator_apply(p, "vc", m);
  REQUIRE(out.rows == 2);
  REQUIRE(out.cols == 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      float best = 0.0f;
      for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b) best = std::max(best, m.at(4 * i + a, 4 * j + b));
      CHECK(out.at(i, j) == doctest::Approx(best).epsilon(1e-6));
    }

  // On constant blocks max- and average-pooling coincide.
  SimilarityMatrix blocks(8, 4);
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 4; ++j) blocks.at(i, j) = i < 4 ? 0.25f : 0.75f;
  const auto pooled = models::comparator_apply(p, "vc", blocks);
  CHECK(pooled.at(0, 0) == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(pooled.at(1, 0) == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("comparator output size and symmetric padding") {
  CHECK(models::comparator_output_size(1) == 1);
  CHECK(models::comparator_output_size(4) == 1);
  CHECK(models::comparator_output_size(5) == 2);
  CHECK(models::comparator_output_size(9) == 3);
  CHECK(models::symmetric_pad_indices(1) == std::vector<std::size_t>{0, 0, 0, 0});
  CHECK(models::symmetric_pad_indices(2) == std::vector<std::size_t>{0, 0, 1, 1});
  CHECK(models::symmetric_pad_indices(3) == std::vector<std::size_t>{0, 1, 2, 2});
}

TEST_CASE("teacher on identical single-region frames scores one") {
  Rng rng(5);
  auto p = models::make_teacher(4, rng, 0.0);
  const RegionFeatureTensor x("x", 1, 1, 4, {0.5f, 0.5f, 0.5f, 0.5f});
  p["teacher.att.u"] = ad::Tensor::from({4}, {1, 1, 1, 1});
  CHECK(models::teacher_similarity(p, x, x) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("a video is at least as similar to itself as to noise") {
  Rng rng(6);
  const auto p = models::make_teacher(8, rng, 0.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto q = test::random_video(rng, 1 + static_cast<std::uint32_t>(rng.below(6)), 3, 8);
    const auto noise = test::random_video(rng, 1 + static_cast<std::uint32_t>(rng.below(6)), 3, 8);
    CHECK(models::teacher_similarity(p, q, q) >= models::teacher_similarity(p, q, noise));
  }
}

TEST_CASE("coarse embedding of identical videos") {
  Rng rng(7);
  const auto p = models::make_coarse_student(8, {2, 16, 4, 12}, rng);
  const auto x = test::random_video(rng, 5, 3, 8);
  const auto a = models::coarse_vector(p, x);
  const auto b = models::coarse_vector(p, x);
  REQUIRE(a.size() == 12);
  CHECK(coarse_similarity(a, b) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(models::coarse_vector(p, x, {true, true}).size() == 12);
  CHECK_THROWS_AS(models::make_coarse_student(8, {3, 16, 4, 12}, rng), ConfigError);
}

TEST_CASE("selector with zero output weights is undecided") {
  Rng rng(8);
  auto p = models::make_selector(4, rng, 10);
  p["selector.fc2.W"] = ad::Tensor({10, 1});
  CHECK(models::selector_confidence(p, {0.3, -1.0, 2.0}) == 0.5);
  const auto q = models::make_selector(4, rng, 10);
  CHECK(models::selector_confidence(q, {0.1, 0.2, 0.3}) == models::selector_confidence(q, {0.1, 0.2, 0.3}));
  CHECK_THROWS_WITH(models::selector_confidence(ParamSet{}, {0, 0, 0}), "selector: checkpoint not loaded");
}

TEST_CASE("checkpoint round-trip") {
  Rng rng(9);
  auto p = models::make_teacher(6, rng);
  models::merge_into(p, models::make_binary_student(6, 70, rng));
  models::round_to_float(p);
  const auto bytes = models::serialize_checkpoint(p);
  CHECK(bytes.substr(0, 8) == "DNSCKPT1");
  CHECK(models::deserialize_checkpoint(bytes) == p);
  CHECK(models::serialize_checkpoint(models::deserialize_checkpoint(bytes)) == bytes);
  const auto path = std::filesystem::temp_directory_path() / "dns_test.ckpt";
  models::save_checkpoint(p, path);
  CHECK(models::load_checkpoint(path) == p);
  std::filesystem::remove(path);
  auto bad = bytes;
  bad[0] = 'x';
  CHECK_THROWS_AS(models::deserialize_checkpoint(bad), FormatError);
  CHECK_THROWS_AS(models::deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)), FormatError);
}

TEST_CASE("trainable parameter names") {
  CHECK(models::is_trainable("attn.att.W"));
  CHECK_FALSE(models::is_trainable("coarse.tf.heads"));
  CHECK_FALSE(models::is_trainable("bin.hash.sigma"));
  CHECK_FALSE(models::is_trainable("selector.bn.running_mean"));
  CHECK_FALSE(models::is_trainable("selector.bn.running_var"));
}

TEST_CASE("full fine similarity gradient with respect to the context vector") {
  Rng rng(10);
  for (int trial = 0; trial < 5; ++trial) {
    ad::Graph g;
    const auto p = models::make_teacher(4, rng);
    Binder b(g, p, true);
    const auto q = models::video_constant(g, test::random_video(rng, 2, 2, 4));
    const auto v = models::video_constant(g, test::random_video(rng, 2, 2, 4));
    g.mark_output("s", models::teacher_pair(b, q, v));
    g.forward();
    if (g.kink_margin() < 1e-3) continue;
    CHECK(ad::finite_difference_check(g, "teacher.att.u", 1e-5) <= 1e-6);
  }
}

TEST_CASE("every trainable block passes finite-difference checks") {
  Rng rng(11);
  for (const auto& [name, build] : test::block_builders()) {
    CAPTURE(name);
    CHECK(test::gradient_sweep(rng, 5, build) <= 1e-5);
  }
}
