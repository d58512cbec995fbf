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
#include "dns/parallel.hpp"
#include "dns/pipeline.hpp"

namespace dns {

const char* provenance_name(Provenance p) { return p == Provenance::kFine ? "fine" : "coarse"; }

std::size_t rerank_count(double percent, std::size_t targets) {
  if (!std::isfinite(percent) || percent < 0.0 || percent > 100.0) {
    throw ConfigError("percentage out of range [0, 100]: " + std::to_string(percent));
  }
  const double exact = percent * static_cast<double>(targets) / 100.0;
  return std::min(targets, static_cast<std::size_t>(std::floor(exact + 0.5)));
}

Retriever::Retriever(std::vector<VideoIndexRecord> index, models::ParamSet params)
    : index_(std::move(index)), params_(std::move(params)) {
  for (std::size_t i = 0; i < index_.size(); ++i) {
    if (!by_id_.emplace(index_[i].video_id, i).second) {
      throw FormatError("index: duplicate id " + index_[i].video_id);
    }
    if (index_[i].coarse.size() != index_.front().coarse.size()) {
      throw ShapeError("index: coarse vectors differ in length at " + index_[i].video_id);
    }
  }
}

std::size_t Retriever::find(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw Error("index has no video '" + id + "'");
  return it->second;
}

std::vector<std::size_t> Retriever::targets_for(const VideoIndexRecord& query) const {
  std::vector<std::size_t> out;
  out.reserve(index_.size());
  for (std::size_t i = 0; i < index_.size(); ++i) {
    if (index_[i].video_id != query.video_id) out.push_back(i);
  }
  return out;
}

std::vector<PairCandidate> Retriever::candidates(const VideoIndexRecord& query,
                                                 const std::vector<std::size_t>& targets) const {
  std::vector<PairCandidate> out;
  out.reserve(targets.size());
  for (std::size_t t : targets) {
    const auto& rec = index_[t];
    if (rec.coarse.size() != query.coarse.size()) throw ShapeError("query coarse vector length mismatch");
    double dot = 0.0;
    for (std::size_t j = 0; j < rec.coarse.size(); ++j) dot += static_cast<double>(query.coarse[j]) * rec.coarse[j];
    out.push_back({query.video_id, rec.video_id, dot, query.self_sim, rec.self_sim});
  }
  return out;
}

double Retriever::fine_score(const VideoIndexRecord& query, std::size_t target) const {
  const auto kind = query.is_binary() ? models::StudentKind::kBinary : models::StudentKind::kAttention;
  return (models::fine_similarity(params_, kind, query.fine, index_.at(target).fine) + 1.0) / 2.0;
}

RankedResult Retriever::assemble(const VideoIndexRecord& query, const std::vector<std::size_t>& targets,
                                 const std::vector<PairCandidate>& pairs,
                                 const std::vector<std::optional<double>>& fine) const {
  RankedResult result;
  result.query_id = query.video_id;
  result.entries.reserve(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    RankedEntry e;
    e.target_id = index_[targets[i]].video_id;
    if (fine[i]) {
      e.score = *fine[i];
      e.provenance = Provenance::kFine;
    } else {
      e.score = pairs[i].coarse;
    }
    result.entries.push_back(std::move(e));
  }
  // Entries start in index order, so stability resolves ties by position.
  std::stable_sort(result.entries.begin(), result.entries.end(),
                   [](const RankedEntry& a, const RankedEntry& b) { return a.score > b.score; });
  return result;
}

RankedResult Retriever::retrieve(const VideoIndexRecord& query, const RoutingPolicy& policy,
                                 double percent) const {
  const auto targets = targets_for(query);
  const auto pairs = candidates(query, targets);
  const std::size_t k = rerank_count(percent, targets.size());
  std::vector<std::optional<double>> fine(targets.size());
  if (k > 0) {
    const auto order = rank_for_rerank(pairs, policy, query.video_id);
    parallel_for(k, [&](std::size_t i) { fine[order[i]] = fine_score(query, targets[order[i]]); });
  }
  return assemble(query, targets, pairs, fine);
}

}  // namespace dns
