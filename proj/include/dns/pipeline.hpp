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

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dns/feature_store.hpp"
#include "dns/models.hpp"
#include "dns/router.hpp"

namespace dns {

// ---- metrics -------------------------------------------------------------------

// AP = (1/n) sum_{i=1..n} i / r_i over the n relevant items, r_i being the
// 1-based rank of the i-th relevant item retrieved; missing items add 0.
double average_precision(const std::vector<std::string>& ranking,
                         const std::set<std::string>& relevant);
double mean_average_precision(const std::vector<double>& aps);

// ---- indexing ------------------------------------------------------------------

// Fine slot by student: attention-weighted tensor (attn), packed codes (bin)
// or the unmodified features (coarse). Coarse vector and self-similarity
// come from the "coarse." and "selector." parameters.
std::vector<VideoIndexRecord> build_index(const std::vector<RegionFeatureTensor>& videos,
                                          const models::ParamSet& params,
                                          models::StudentKind student);
VideoIndexRecord index_record(const RegionFeatureTensor& video, const models::ParamSet& params,
                              models::StudentKind student);

// ---- retrieval -----------------------------------------------------------------

enum class Provenance { kCoarse, kFine };
const char* provenance_name(Provenance p);

struct RankedEntry {
  std::string target_id;
  double score = 0.0;
  Provenance provenance = Provenance::kCoarse;
};

struct RankedResult {
  std::string query_id;
  std::vector<RankedEntry> entries;
};

// Number of targets re-ranked at `percent` (round half up).
std::size_t rerank_count(double percent, std::size_t targets);

class Retriever {
 public:
  Retriever(std::vector<VideoIndexRecord> index, models::ParamSet params);

  const std::vector<VideoIndexRecord>& index() const noexcept { return index_; }
  const models::ParamSet& params() const noexcept { return params_; }
  std::size_t find(const std::string& id) const;  // throws when absent

  // Targets are every index record except the query's own id.
  std::vector<std::size_t> targets_for(const VideoIndexRecord& query) const;
  std::vector<PairCandidate> candidates(const VideoIndexRecord& query,
                                        const std::vector<std::size_t>& targets) const;
  // Fine score rescaled to [0, 1].
  double fine_score(const VideoIndexRecord& query, std::size_t target) const;

  // Coarse ranking, policy ordering, top `percent` re-scored by the fine
  // student; entries sorted by score (descending), ties by index position.
  RankedResult retrieve(const VideoIndexRecord& query, const RoutingPolicy& policy,
                        double percent) const;

  // Final ranking given the targets whose fine scores replace coarse ones.
  RankedResult assemble(const VideoIndexRecord& query, const std::vector<std::size_t>& targets,
                        const std::vector<PairCandidate>& pairs,
                        const std::vector<std::optional<double>>& fine) const;

 private:
  std::vector<VideoIndexRecord> index_;
  models::ParamSet params_;
  std::map<std::string, std::size_t> by_id_;
};

// ---- evaluation ----------------------------------------------------------------

using Relevance = std::map<std::string, std::set<std::string>>;

struct EvalOptions {
  std::vector<double> percents{0, 5, 10, 30, 100};
  // Share percentages across all query-target pairs instead of per query.
  bool global_pairs = false;
  // Median-of-repeats wall clock per query; 0 disables timing (reported as 0).
  std::size_t timing_repeats = 5;
  // Precomputed fine scores (see full_fine_table); computed when absent.
  std::shared_ptr<const FineTable> fine_table;
};

struct EvalPoint {
  double percent = 0.0;
  double map = 0.0;
  std::vector<double> ap;  // per query, in query order
  double sec_per_query = 0.0;
};

struct EvalReport {
  std::vector<std::string> queries;
  std::vector<EvalPoint> points;
  double bytes_per_video = 0.0;
};

EvalReport evaluate(const Retriever& retriever, const Relevance& truth, const RoutingPolicy& policy,
                    const EvalOptions& options = {});

// Fine scores for every (query, target) pair of the given queries.
FineTable full_fine_table(const Retriever& retriever, const std::vector<std::string>& queries);

// ---- CSV -----------------------------------------------------------------------

std::string ranking_csv(const std::vector<RankedResult>& results);
std::string truth_csv(const Relevance& truth, const std::vector<std::string>& all_targets);
// Reads query_id,target_id,relevant; queries with no relevant target are kept
// with an empty set.
Relevance parse_truth_csv(std::string_view text);
std::string report_csv(const EvalReport& report);
struct ReportRow {
  double percent, map, sec_per_query, bytes_per_video;
};
std::vector<ReportRow> parse_report_csv(std::string_view text);

}  // namespace dns
