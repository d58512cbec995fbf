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
#include <atomic>
#include <cmath>
#include <numeric>

#include "dns/error.hpp"
#include "dns/parallel.hpp"
#include "dns/training.hpp"

namespace dns::training {

namespace {

std::atomic<std::uint64_t> g_teacher_calls{0};

double dot(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

std::size_t find_root(std::vector<std::size_t>& parent, std::size_t x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

// The k highest-scoring candidates, ties broken by lower index.
std::vector<std::size_t> top_k(const std::vector<std::size_t>& candidates,
                               const std::vector<double>& score, std::size_t k) {
  std::vector<std::size_t> c = candidates;
  const std::size_t keep = std::min(k, c.size());
  std::partial_sort(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(keep), c.end(),
                    [&](std::size_t a, std::size_t b) {
                      return score[a] != score[b] ? score[a] > score[b] : a < b;
                    });
  c.resize(keep);
  return c;
}

}  // namespace

std::vector<float> global_descriptor(const RegionFeatureTensor& x) {
  std::vector<double> acc(x.dim(), 0.0);
  const auto v = x.values();
  for (std::size_t i = 0; i < v.size(); ++i) acc[i % x.dim()] += v[i];
  double norm = 0.0;
  for (double a : acc) norm += a * a;
  norm = std::sqrt(norm);
  std::vector<float> out(x.dim(), 0.0f);
  if (norm > 0.0) {
    for (std::size_t i = 0; i < acc.size(); ++i) out[i] = static_cast<float>(acc[i] / norm);
  }
  return out;
}

MinedPairs mine_pairs(const std::vector<std::vector<float>>& descriptors, double threshold,
                      std::size_t k) {
  const std::size_t n = descriptors.size();
  for (const auto& d : descriptors) {
    if (d.size() != descriptors.front().size()) throw ShapeError("mine_pairs: descriptor sizes differ");
  }
  std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = dot(descriptors[i], descriptors[j]);
      sim[i][j] = sim[j][i] = s;
      if (s > threshold) parent[find_root(parent, i)] = find_root(parent, j);
    }
  }

  MinedPairs out;
  out.cluster.assign(n, -1);
  std::vector<std::size_t> size(n, 0);
  for (std::size_t i = 0; i < n; ++i) ++size[find_root(parent, i)];
  std::map<std::size_t, int> label;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find_root(parent, i);
    if (size[r] < 2) continue;
    auto [it, inserted] = label.emplace(r, static_cast<int>(label.size()));
    out.cluster[i] = it->second;
  }
  out.cluster_count = label.size();

  std::vector<std::size_t> unclustered;
  for (std::size_t i = 0; i < n; ++i) {
    if (out.cluster[i] < 0) unclustered.push_back(i);
  }
  for (std::size_t a = 0; a < n; ++a) {
    if (out.cluster[a] < 0) continue;
    std::vector<std::size_t> pos, other;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == a || out.cluster[j] < 0) continue;
      (out.cluster[j] == out.cluster[a] ? pos : other).push_back(j);
    }
    std::vector<std::size_t> neg = top_k(other, sim[a], k);
    for (std::size_t j : top_k(unclustered, sim[a], k)) neg.push_back(j);
    out.anchors.push_back(a);
    out.positives.push_back(std::move(pos));
    out.negatives.push_back(std::move(neg));
  }
  return out;
}

std::uint64_t teacher_call_count() { return g_teacher_calls.load(); }

double teacher_similarity_counted(const models::ParamSet& teacher, const RegionFeatureTensor& q,
                                  const RegionFeatureTensor& p) {
  g_teacher_calls.fetch_add(1);
  return models::teacher_similarity(teacher, q, p);
}

std::map<std::pair<std::size_t, std::size_t>, double> precompute_teacher_scores(
    const models::ParamSet& teacher, const std::vector<RegionFeatureTensor>& videos,
    const MinedPairs& mined) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < mined.anchors.size(); ++i) {
    for (std::size_t p : mined.positives[i]) pairs.emplace_back(mined.anchors[i], p);
    for (std::size_t p : mined.negatives[i]) pairs.emplace_back(mined.anchors[i], p);
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  std::vector<double> scores(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    scores[i] = teacher_similarity_counted(teacher, videos.at(pairs[i].first), videos.at(pairs[i].second));
  });
  std::map<std::pair<std::size_t, std::size_t>, double> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) out.emplace(pairs[i], scores[i]);
  return out;
}

}  // namespace dns::training
