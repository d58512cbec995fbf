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
#include <memory>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "dns/error.hpp"
#include "dns/models.hpp"
#include "dns/router.hpp"
#include "support.hpp"

using namespace dns;

namespace {

std::vector<PairCandidate> random_pairs(Rng& rng, std::size_t n) {
  std::vector<PairCandidate> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"q", "t" + std::to_string(i), rng.uniform() * 2 - 1, static_cast<float>(rng.uniform()),
                   static_cast<float>(rng.uniform())});
  }
  return out;
}

bool is_permutation_of(std::vector<std::size_t> order, std::size_t n) {
  std::sort(order.begin(), order.end());
  std::vector<std::size_t> iota(n);
  std::iota(iota.begin(), iota.end(), 0);
  return order == iota;
}

}  // namespace

TEST_CASE("policy names round-trip") {
  for (auto k : {PolicyKind::kNetwork, PolicyKind::kThreshold, PolicyKind::kOracle, PolicyKind::kRandom}) {
    CHECK(parse_policy(policy_name(k)) == k);
  }
  CHECK_THROWS_AS(parse_policy("greedy"), ConfigError);
}

TEST_CASE("oracle orders by descending disagreement") {
  const std::vector<PairCandidate> pairs{{"q", "a", 0.6}, {"q", "b", 0.4}, {"q", "c", 0.2}};
  auto fine = std::make_shared<FineTable>();
  (*fine)[{"q", "a"}] = 0.1;  // 0.5
  (*fine)[{"q", "b"}] = 0.5;  // 0.1
  (*fine)[{"q", "c"}] = 0.5;  // 0.3
  CHECK(rank_for_rerank(pairs, RoutingPolicy::oracle(fine)) == std::vector<std::size_t>{0, 2, 1});
  CHECK_THROWS_AS(rank_for_rerank(pairs, RoutingPolicy::oracle()), Error);
  CHECK(rank_for_rerank(pairs, RoutingPolicy::oracle().with_fine_table(fine)) == std::vector<std::size_t>{0, 2, 1});
  CHECK_THROWS_AS(RoutingPolicy::random(1).with_fine_table(fine), ConfigError);
}

TEST_CASE("threshold orders by descending coarse similarity, ties in input order") {
  const std::vector<PairCandidate> pairs{{"q", "a", 0.1}, {"q", "b", 0.7}, {"q", "c", 0.1}, {"q", "d", 0.9}};
  CHECK(rank_for_rerank(pairs, RoutingPolicy::threshold(0.5)) == std::vector<std::size_t>{3, 1, 0, 2});
}

TEST_CASE("random ordering is reproducible and seed dependent") {
  Rng rng(1);
  const auto pairs = random_pairs(rng, 50);
  const auto a = rank_for_rerank(pairs, RoutingPolicy::random(3), "q");
  CHECK(a == rank_for_rerank(pairs, RoutingPolicy::random(3), "q"));
  CHECK(a != rank_for_rerank(pairs, RoutingPolicy::random(4), "q"));
  CHECK(a != rank_for_rerank(pairs, RoutingPolicy::random(3), "other"));
}

TEST_CASE("network orders by descending selector confidence") {
  Rng rng(2);
  auto sel = std::make_shared<models::ParamSet>(models::make_selector(4, rng, 16));
  const auto pairs = random_pairs(rng, 40);
  const auto order = rank_for_rerank(pairs, RoutingPolicy::network(sel));
  std::vector<std::array<double, 3>> z;
  for (const auto& p : pairs) z.push_back({p.coarse, p.self_q, p.self_p});
  const auto conf = models::selector_confidences(*sel, z);
  for (std::size_t i = 1; i < order.size(); ++i) CHECK(conf[order[i - 1]] >= conf[order[i]]);
  CHECK_THROWS_AS(RoutingPolicy::network(std::make_shared<models::ParamSet>()), Error);
}

TEST_CASE("every policy returns a permutation") {
  Rng rng(3);
  auto sel = std::make_shared<models::ParamSet>(models::make_selector(4, rng, 8));
  for (std::size_t n : {0, 1, 2, 17, 100}) {
    const auto pairs = random_pairs(rng, n);
    auto fine = std::make_shared<FineTable>();
    for (const auto& p : pairs) (*fine)[{p.query_id, p.target_id}] = rng.uniform();
    for (const auto& policy : {RoutingPolicy::network(sel), RoutingPolicy::threshold(0.3),
                               RoutingPolicy::oracle(fine), RoutingPolicy::random(9)}) {
      CAPTURE(policy_name(policy.kind()));
      CHECK(is_permutation_of(rank_for_rerank(pairs, policy), n));
    }
  }
}
