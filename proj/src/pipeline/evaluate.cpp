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
#include <chrono>
#include <sstream>

#include "dns/csv.hpp"
#include "dns/error.hpp"
#include "dns/parallel.hpp"
#include "dns/pipeline.hpp"

namespace dns {

namespace {

std::vector<std::string> ranking_ids(const RankedResult& r) {
  std::vector<std::string> ids;
  ids.reserve(r.entries.size());
  for (const auto& e : r.entries) ids.push_back(e.target_id);
  return ids;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

FineTable full_fine_table(const Retriever& retriever, const std::vector<std::string>& queries) {
  struct Job {
    std::size_t q, t;
  };
  std::vector<Job> jobs;
  for (const auto& id : queries) {
    const std::size_t q = retriever.find(id);
    for (std::size_t t : retriever.targets_for(retriever.index()[q])) jobs.push_back({q, t});
  }
  std::vector<double> scores(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    scores[i] = retriever.fine_score(retriever.index()[jobs[i].q], jobs[i].t);
  });
  FineTable table;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    table.emplace(std::make_pair(retriever.index()[jobs[i].q].video_id, retriever.index()[jobs[i].t].video_id),
                  scores[i]);
  }
  return table;
}

EvalReport evaluate(const Retriever& retriever, const Relevance& truth, const RoutingPolicy& policy,
                    const EvalOptions& options) {
  EvalReport report;
  for (const auto& [q, rel] : truth) {
    retriever.find(q);
    if (!rel.empty()) report.queries.push_back(q);
  }
  for (double p : options.percents) rerank_count(p, 0);  // validates the range

  const bool need_fine = policy.kind() == PolicyKind::kOracle ||
                         std::any_of(options.percents.begin(), options.percents.end(),
                                     [](double p) { return p > 0.0; });
  std::shared_ptr<const FineTable> table = options.fine_table;
  if (!table) {
    table = std::make_shared<const FineTable>(need_fine ? full_fine_table(retriever, report.queries) : FineTable{});
  }
  const RoutingPolicy active = policy.kind() == PolicyKind::kOracle ? policy.with_fine_table(table) : policy;

  struct QueryState {
    const VideoIndexRecord* record;
    std::vector<std::size_t> targets;
    std::vector<PairCandidate> pairs;
    std::vector<std::size_t> order;  // per-query mode
  };
  std::vector<QueryState> states(report.queries.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    auto& s = states[i];
    s.record = &retriever.index()[retriever.find(report.queries[i])];
    s.targets = retriever.targets_for(*s.record);
    s.pairs = retriever.candidates(*s.record, s.targets);
    if (!options.global_pairs && need_fine) s.order = rank_for_rerank(s.pairs, active, s.record->video_id);
  }

  // Global mode ranks every pair of every query together.
  std::vector<std::pair<std::size_t, std::size_t>> global_order;
  if (options.global_pairs && need_fine) {
    std::vector<PairCandidate> all;
    std::vector<std::pair<std::size_t, std::size_t>> owner;
    for (std::size_t i = 0; i < states.size(); ++i) {
      for (std::size_t j = 0; j < states[i].pairs.size(); ++j) {
        all.push_back(states[i].pairs[j]);
        owner.emplace_back(i, j);
      }
    }
    for (std::size_t pos : rank_for_rerank(all, active, "global")) global_order.push_back(owner[pos]);
  }

  for (double percent : options.percents) {
    EvalPoint point;
    point.percent = percent;
    std::vector<std::vector<std::optional<double>>> fine(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) fine[i].resize(states[i].targets.size());
    auto lookup = [&](std::size_t i, std::size_t j) {
      return table->at({states[i].record->video_id, retriever.index()[states[i].targets[j]].video_id});
    };
    if (options.global_pairs) {
      const std::size_t k = rerank_count(percent, global_order.size());
      for (std::size_t n = 0; n < k; ++n) {
        const auto [i, j] = global_order[n];
        fine[i][j] = lookup(i, j);
      }
    } else {
      for (std::size_t i = 0; i < states.size(); ++i) {
        const std::size_t k = rerank_count(percent, states[i].targets.size());
        for (std::size_t n = 0; n < k; ++n) fine[i][states[i].order[n]] = lookup(i, states[i].order[n]);
      }
    }
    for (std::size_t i = 0; i < states.size(); ++i) {
      const auto ranked = retriever.assemble(*states[i].record, states[i].targets, states[i].pairs, fine[i]);
      point.ap.push_back(average_precision(ranking_ids(ranked), truth.at(report.queries[i])));
    }
    point.map = mean_average_precision(point.ap);

    if (options.timing_repeats > 0 && !states.empty()) {
      double total = 0.0;
      for (const auto& s : states) {
        std::vector<double> runs;
        for (std::size_t r = 0; r < options.timing_repeats; ++r) {
          const auto t0 = std::chrono::steady_clock::now();
          const auto ranked = retriever.retrieve(*s.record, active, percent);
          runs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        total += median(std::move(runs));
      }
      point.sec_per_query = total / static_cast<double>(states.size());
    }
    report.points.push_back(std::move(point));
  }

  if (!retriever.index().empty()) {
    report.bytes_per_video = static_cast<double>(serialize_index(retriever.index()).size()) /
                             static_cast<double>(retriever.index().size());
  }
  return report;
}

std::string ranking_csv(const std::vector<RankedResult>& results) {
  std::string out = "query_id,target_id,score,provenance\n";
  for (const auto& r : results) {
    for (const auto& e : r.entries) {
      out += csv::join({r.query_id, e.target_id, csv::number(e.score), provenance_name(e.provenance)}) + "\n";
    }
  }
  return out;
}

std::string truth_csv(const Relevance& truth, const std::vector<std::string>& all_targets) {
  std::string out = "query_id,target_id,relevant\n";
  for (const auto& [q, rel] : truth) {
    for (const auto& t : all_targets) {
      if (t == q) continue;
      out += csv::join({q, t, rel.count(t) ? "1" : "0"}) + "\n";
    }
  }
  return out;
}

Relevance parse_truth_csv(std::string_view text) {
  Relevance truth;
  for (const auto& row : csv::parse(text, {"query_id", "target_id", "relevant"})) {
    auto& rel = truth[row[0]];
    if (row[2] == "1") {
      rel.insert(row[1]);
    } else if (row[2] != "0") {
      throw FormatError("truth csv: relevant must be 0 or 1, got '" + row[2] + "'");
    }
  }
  return truth;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "percent,map,sec_per_query,bytes_per_video\n";
  for (const auto& p : report.points) {
    out += csv::join({csv::number(p.percent), csv::number(p.map), csv::number(p.sec_per_query),
                      csv::number(report.bytes_per_video)}) +
           "\n";
  }
  return out;
}

std::vector<ReportRow> parse_report_csv(std::string_view text) {
  std::vector<ReportRow> rows;
  for (const auto& row : csv::parse(text, {"percent", "map", "sec_per_query", "bytes_per_video"})) {
    ReportRow r{};
    double* fields[] = {&r.percent, &r.map, &r.sec_per_query, &r.bytes_per_video};
    for (std::size_t i = 0; i < 4; ++i) {
      try {
        *fields[i] = std::stod(row[i]);
      } catch (const std::exception&) {
        throw FormatError("report csv: bad number '" + row[i] + "'");
      }
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace dns
