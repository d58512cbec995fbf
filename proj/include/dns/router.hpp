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

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dns/models.hpp"

namespace dns {

enum class PolicyKind { kNetwork, kThreshold, kOracle, kRandom };

PolicyKind parse_policy(const std::string& name);
std::string policy_name(PolicyKind kind);

// Fine scores rescaled to [0, 1], keyed by (query id, target id).
using FineTable = std::map<std::pair<std::string, std::string>, double>;

// How query-target pairs are ordered for re-ranking. Each kind carries only
// its own parameters.
class RoutingPolicy {
 public:
  static RoutingPolicy network(std::shared_ptr<const models::ParamSet> selector);
  static RoutingPolicy threshold(double value);
  static RoutingPolicy oracle(std::shared_ptr<const FineTable> fine = nullptr);
  static RoutingPolicy random(std::uint64_t seed);

  PolicyKind kind() const noexcept { return kind_; }
  const models::ParamSet* selector() const noexcept { return selector_.get(); }
  double threshold_value() const noexcept { return threshold_; }
  const FineTable* fine_table() const noexcept { return fine_.get(); }
  std::uint64_t seed() const noexcept { return seed_; }

  // Same policy with its fine table replaced (oracle only).
  RoutingPolicy with_fine_table(std::shared_ptr<const FineTable> fine) const;

 private:
  PolicyKind kind_ = PolicyKind::kRandom;
  std::shared_ptr<const models::ParamSet> selector_;
  double threshold_ = 0.0;
  std::shared_ptr<const FineTable> fine_;
  std::uint64_t seed_ = 0;
};

// One query-target pair awaiting a routing decision.
struct PairCandidate {
  std::string query_id;
  std::string target_id;
  double coarse = 0.0;
  float self_q = 0.0f;
  float self_p = 0.0f;
};

// Positions of `pairs` in re-ranking order (most deserving first):
//   network   descending selector confidence
//   threshold descending coarse similarity
//   oracle    descending |coarse - fine|
//   random    shuffle seeded by the policy seed and `stream`
// Ties keep input order. The result is always a permutation.
std::vector<std::size_t> rank_for_rerank(const std::vector<PairCandidate>& pairs,
                                         const RoutingPolicy& policy,
                                         const std::string& stream = {});

}  // namespace dns
