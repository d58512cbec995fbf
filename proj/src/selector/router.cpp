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
#include <numeric>

#include "dns/error.hpp"
#include "dns/random.hpp"
#include "dns/router.hpp"

namespace dns {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<std::size_t> order_by_descending(const std::vector<double>& key) {
  std::vector<std::size_t> idx(key.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
  return idx;
}

}  // namespace

PolicyKind parse_policy(const std::string& name) {
  if (name == "network") return PolicyKind::kNetwork;
  if (name == "threshold") return PolicyKind::kThreshold;
  if (name == "oracle") return PolicyKind::kOracle;
  if (name == "random") return PolicyKind::kRandom;
  throw ConfigError("unknown policy '" + name + "' (expected network, threshold, oracle or random)");
}

std::string policy_name(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kNetwork: return "network";
    case PolicyKind::kThreshold: return "threshold";
    case PolicyKind::kOracle: return "oracle";
    case PolicyKind::kRandom: return "random";
  }
  return "";
}

RoutingPolicy RoutingPolicy::network(std::shared_ptr<const models::ParamSet> selector) {
  if (!selector || !selector->count("selector.fc1.W")) throw Error("selector: checkpoint not loaded");
  RoutingPolicy p;
  p.kind_ = PolicyKind::kNetwork;
  p.selector_ = std::move(selector);
  return p;
}

RoutingPolicy RoutingPolicy::threshold(double value) {
  if (!std::isfinite(value)) throw ConfigError("threshold policy: value must be finite");
  RoutingPolicy p;
  p.kind_ = PolicyKind::kThreshold;
  p.threshold_ = value;
  return p;
}

RoutingPolicy RoutingPolicy::oracle(std::shared_ptr<const FineTable> fine) {
  RoutingPolicy p;
  p.kind_ = PolicyKind::kOracle;
  p.fine_ = std::move(fine);
  return p;
}

RoutingPolicy RoutingPolicy::random(std::uint64_t seed) {
  RoutingPolicy p;
  p.kind_ = PolicyKind::kRandom;
  p.seed_ = seed;
  return p;
}

RoutingPolicy RoutingPolicy::with_fine_table(std::shared_ptr<const FineTable> fine) const {
  if (kind_ != PolicyKind::kOracle) throw ConfigError("only the oracle policy takes a fine-score table");
  return oracle(std::move(fine));
}

std::vector<std::size_t> rank_for_rerank(const std::vector<PairCandidate>& pairs,
                                         const RoutingPolicy& policy, const std::string& stream) {
  std::vector<double> key(pairs.size());
  switch (policy.kind()) {
    case PolicyKind::kNetwork: {
      std::vector<std::array<double, 3>> z;
      z.reserve(pairs.size());
      for (const auto& p : pairs) z.push_back({p.coarse, p.self_q, p.self_p});
      key = models::selector_confidences(*policy.selector(), z);
      break;
    }
    case PolicyKind::kThreshold:
      for (std::size_t i = 0; i < pairs.size(); ++i) key[i] = pairs[i].coarse;
      break;
    case PolicyKind::kOracle: {
      const FineTable* table = policy.fine_table();
      if (table == nullptr) throw Error("oracle policy: no fine-score table supplied");
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto it = table->find({pairs[i].query_id, pairs[i].target_id});
        if (it == table->end()) {
          throw Error("oracle policy: no fine score for pair (" + pairs[i].query_id + ", " +
                      pairs[i].target_id + ")");
        }
        key[i] = std::abs(pairs[i].coarse - it->second);
      }
      break;
    }
    case PolicyKind::kRandom: {
      std::vector<std::size_t> idx(pairs.size());
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      Rng rng(policy.seed() ^ fnv1a(stream));
      rng.shuffle(std::span<std::size_t>(idx));
      return idx;
    }
  }
  return order_by_descending(key);
}

}  // namespace dns
