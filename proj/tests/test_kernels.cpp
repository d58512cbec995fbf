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
#include <bit>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "dns/error.hpp"
#include "dns/kernels.hpp"
#include "dns/parallel.hpp"
#include "dns/similarity.hpp"
#include "support.hpp"

using namespace dns;

namespace {

double naive_f2f(const RegionFeatureTensor& q, const RegionFeatureTensor& p, std::size_t i, std::size_t k) {
  double sum = 0.0;
  for (std::size_t j = 0; j < q.regions(); ++j) {
    double best = -1e300;
    for (std::size_t l = 0; l < p.regions(); ++l) {
      double dot = 0.0;
      for (std::size_t d = 0; d < q.dim(); ++d) dot += double{q.region(i, j)[d]} * p.region(k, l)[d];
      best = std::max(best, dot);
    }
    sum += best;
  }
  return sum / q.regions();
}

BinaryCodeTensor codes_of(const std::vector<std::int8_t>& c, std::uint32_t n, std::uint32_t r, std::uint32_t bits) {
  return pack_codes("b", n, r, bits, c);
}

std::vector<std::int8_t> random_pm1(Rng& rng, std::size_t count) {
  std::vector<std::int8_t> c(count);
  for (auto& x : c) x = rng.bernoulli(0.5) ? 1 : -1;
  return c;
}

// Restores the startup instruction set when a test case ends.
struct IsaGuard {
  kernels::Isa saved = kernels::active_isa();
  ~IsaGuard() { kernels::set_isa(saved); }
};

}  // namespace

TEST_CASE("frame_to_frame of a video with itself has a unit diagonal") {
  Rng rng(1);
  const auto x = test::random_video(rng, 5, 3, 8);
  const auto m = frame_to_frame(x, x);
  for (std::size_t i = 0; i < 5; ++i) CHECK(m.at(i, i) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("frame_to_frame with an orthogonal single region is zero") {
  const RegionFeatureTensor q("q", 2, 1, 3, {1, 0, 0, 1, 0, 0});
  const RegionFeatureTensor p("p", 2, 2, 3, {0, 1, 0, 0, 0, 1, 0, 0, 1, 0, -1, 0});
  const auto m = frame_to_frame(q, p);
  for (float v : m.values) CHECK(std::abs(v) <= 1e-6);
}

TEST_CASE("frame_to_frame matches the naive loop") {
  Rng rng(2);
  const auto q = test::random_video(rng, 2, 3, 8);
  const auto p = test::random_video(rng, 4, 2, 8);
  const auto m = frame_to_frame(q, p);
  REQUIRE(m.rows == 2);
  REQUIRE(m.cols == 4);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(m.at(i, k) - naive_f2f(q, p, i, k)) <= 1e-6);
}

TEST_CASE("frame_to_frame rejects mismatched dimensions") {
  Rng rng(3);
  CHECK_THROWS_AS(frame_to_frame(test::random_video(rng, 2, 2, 4), test::random_video(rng, 2, 2, 5)), ShapeError);
}

TEST_CASE("hamming similarity of identical codes is one") {
  Rng rng(4);
  const auto c = codes_of(random_pm1(rng, 3 * 2 * 70), 3, 2, 70);
  const auto m = hamming_frame_to_frame(c, c);
  for (std::size_t i = 0; i < 3; ++i) CHECK(m.at(i, i) == 1.0f);
  auto frame = random_pm1(rng, 2 * 70);
  std::vector<std::int8_t> same;
  for (int f = 0; f < 4; ++f) same.insert(same.end(), frame.begin(), frame.end());
  const auto s = codes_of(same, 4, 2, 70);
  for (float v : hamming_frame_to_frame(s, s).values) CHECK(v == 1.0f);
}

TEST_CASE("hamming similarity of complementary codes is minus one") {
  Rng rng(5);
  auto a = random_pm1(rng, 2 * 1 * 64);
  auto b = a;
  for (auto& x : b) x = static_cast<std::int8_t>(-x);
  const auto m = hamming_frame_to_frame(codes_of(a, 2, 1, 64), codes_of(b, 2, 1, 64));
  CHECK(m.at(0, 0) == -1.0f);
  CHECK(m.at(1, 1) == -1.0f);
}

TEST_CASE("hamming similarity equals the dense +-1 formulation") {
  Rng rng(6);
  for (std::uint32_t bits : {3u, 64u, 100u, 512u}) {
    const auto a = random_pm1(rng, 2 * 3 * bits), b = random_pm1(rng, 3 * 2 * bits);
    const auto m = hamming_frame_to_frame(codes_of(a, 2, 3, bits), codes_of(b, 3, 2, bits));
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t k = 0; k < 3; ++k) {
        long sum = 0;
        for (std::size_t j = 0; j < 3; ++j) {
          int best = -1 << 30;
          for (std::size_t l = 0; l < 2; ++l) {
            int dot = 0;
            for (std::size_t d = 0; d < bits; ++d) dot += a[(i * 3 + j) * bits + d] * b[(k * 2 + l) * bits + d];
            best = std::max(best, dot);
          }
          sum += best;
        }
        // exact rational rounded once to float
        CHECK(m.at(i, k) == static_cast<float>(static_cast<double>(sum) / (3.0 * bits)));
      }
  }
}

TEST_CASE("video_to_video clamps and averages") {
  SimilarityMatrix eye(3, 3);
  for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 5.0f;
  CHECK(video_to_video(eye) == 1.0);
  SimilarityMatrix neg(2, 4, std::vector<float>(8, -3.0f));
  CHECK(video_to_video(neg) == -1.0);

  Rng rng(7);
  SimilarityMatrix m(4, 6);
  for (auto& v : m.values) v = static_cast<float>(rng.normal());
  double expect = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    double best = -1.0;
    for (std::size_t j = 0; j < 6; ++j) best = std::max(best, std::clamp(double{m.at(i, j)}, -1.0, 1.0));
    expect += best / 4.0;
  }
  CHECK(std::abs(video_to_video(m) - expect) <= 1e-7);
}

TEST_CASE("self similarity") {
  SUBCASE("one identical unit region per frame gives all ones") {
    const RegionFeatureTensor x("x", 3, 1, 2, {0.6f, 0.8f, 0.6f, 0.8f, 0.6f, 0.8f});
    for (float v : self_similarity_matrix(x).values) CHECK(v == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("matches the double region loop and is symmetric") {
    Rng rng(8);
    const auto x = test::random_video(rng, 3, 2, 8);
    const auto m = self_similarity_matrix(x);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t k = 0; k < 3; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < 2; ++j)
          for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t d = 0; d < 8; ++d) s += double{x.region(i, j)[d]} * x.region(k, l)[d];
        CHECK(std::abs(m.at(i, k) - s / 4.0) <= 1e-6);
        CHECK(m.at(i, k) == m.at(k, i));
      }
  }
  SUBCASE("score is the arithmetic mean") {
    CHECK(self_similarity_score(SimilarityMatrix(2, 2, {0.5f, 0.5f, 0.5f, 0.5f})) == 0.5);
    CHECK(self_similarity_score(SimilarityMatrix(2, 2, {1.0f, -1.0f, -1.0f, 1.0f})) == 0.0);
    Rng rng(9);
    SimilarityMatrix m(5, 5);
    double sum = 0.0;
    for (auto& v : m.values) {
      v = static_cast<float>(rng.normal());
      sum += v;
    }
    CHECK(std::abs(self_similarity_score(m) - sum / 25.0) <= 1e-9);
  }
}

TEST_CASE("coarse similarity") {
  const std::vector<float> a{0.6f, 0.8f}, b{-0.8f, 0.6f};
  CHECK(coarse_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(std::abs(coarse_similarity(a, b)) <= 1e-7);
  Rng rng(10);
  std::vector<float> x(37), y(37);
  double expect = 0.0;
  for (std::size_t i = 0; i < 37; ++i) {
    x[i] = static_cast<float>(rng.normal());
    y[i] = static_cast<float>(rng.normal());
    expect += double{x[i]} * y[i];
  }
  CHECK(std::abs(coarse_similarity(x, y) - expect) <= 1e-9);
  CHECK_THROWS_AS(coarse_similarity(x, a), ShapeError);
}

TEST_CASE("scalar and avx2 kernels agree") {
  const auto* avx = kernels::avx2_table();
  if (avx == nullptr || !kernels::cpu_supports(kernels::Isa::kAvx2)) {
    MESSAGE("AVX2 unavailable; equivalence not exercised");
    return;
  }
  const auto& sc = kernels::scalar_table();
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng.below(70);
    std::vector<float> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<float>(rng.normal());
      b[i] = static_cast<float>(rng.normal());
    }
    CHECK(std::abs(sc.dot(a.data(), b.data(), n) - avx->dot(a.data(), b.data(), n)) <= 1e-5f);

    const std::size_t words = 1 + rng.below(9);
    std::vector<std::uint64_t> wa(words), wb(words);
    for (std::size_t i = 0; i < words; ++i) {
      wa[i] = rng.next();
      wb[i] = rng.next();
    }
    CHECK(sc.xor_popcount(wa.data(), wb.data(), words) == avx->xor_popcount(wa.data(), wb.data(), words));

    const std::size_t qr = 1 + rng.below(6), pr = 1 + rng.below(6), dim = 1 + rng.below(40);
    const auto q = test::random_unit_rows(rng, qr, dim), p = test::random_unit_rows(rng, pr, dim);
    std::vector<float> o1(qr), o2(qr);
    sc.region_max(q.data(), qr, p.data(), pr, dim, o1.data());
    avx->region_max(q.data(), qr, p.data(), pr, dim, o2.data());
    for (std::size_t j = 0; j < qr; ++j) CHECK(std::abs(o1[j] - o2[j]) <= 1e-6f);

    std::vector<std::uint64_t> cq(qr * words), cp(pr * words);
    for (auto& w : cq) w = rng.next();
    for (auto& w : cp) w = rng.next();
    std::vector<std::uint32_t> d1(qr), d2(qr);
    sc.region_min_distance(cq.data(), qr, cp.data(), pr, words, d1.data());
    avx->region_min_distance(cq.data(), qr, cp.data(), pr, words, d2.data());
    CHECK(d1 == d2);
  }
}

TEST_CASE("similarity results do not depend on the active instruction set") {
  if (!kernels::cpu_supports(kernels::Isa::kAvx2) || kernels::avx2_table() == nullptr) return;
  IsaGuard guard;
  Rng rng(12);
  const auto q = test::random_video(rng, 6, 4, 24);
  const auto p = test::random_video(rng, 5, 3, 24);
  const auto cq = codes_of(random_pm1(rng, 6 * 4 * 300), 6, 4, 300);
  const auto cp = codes_of(random_pm1(rng, 5 * 3 * 300), 5, 3, 300);
  kernels::set_isa(kernels::Isa::kScalar);
  const auto ms = frame_to_frame(q, p);
  const auto hs = hamming_frame_to_frame(cq, cp);
  kernels::set_isa(kernels::Isa::kAvx2);
  const auto ma = frame_to_frame(q, p);
  CHECK(hamming_frame_to_frame(cq, cp) == hs);
  for (std::size_t i = 0; i < ms.values.size(); ++i) CHECK(std::abs(ms.values[i] - ma.values[i]) <= 1e-6f);
}

TEST_CASE("batch variants match one-at-a-time calls") {
  Rng rng(13);
  const auto q = test::random_video(rng, 3, 2, 8);
  std::vector<RegionFeatureTensor> targets;
  for (int i = 0; i < 7; ++i) targets.push_back(test::random_video(rng, 1 + static_cast<std::uint32_t>(i % 4), 2, 8));
  std::vector<const RegionFeatureTensor*> ptrs;
  for (const auto& t : targets) ptrs.push_back(&t);
  const auto batch = frame_to_frame_batch(q, ptrs);
  REQUIRE(batch.size() == targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) CHECK(batch[i] == frame_to_frame(q, targets[i]));
}

TEST_CASE("parallel_for visits every index once and rethrows") {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                    if (i == 7) throw Error("boom");
                  }),
                  Error);
  CHECK(worker_count() >= 1);
}
