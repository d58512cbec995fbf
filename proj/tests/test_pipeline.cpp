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
#include <numeric>
#include <vector>

#include "doctest.h"
#include "dns/error.hpp"
#include "dns/models.hpp"
#include "dns/pipeline.hpp"
#include "dns/synthetic.hpp"
#include "support.hpp"

using namespace dns;

namespace {

// Mean of precision@rank over the relevant items, walking the ranking.
double ap_oracle(const std::vector<std::string>& ranking, const std::set<std::string>& relevant) {
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (!relevant.count(ranking[r])) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(relevant.size());
}

struct Fixture {
  SyntheticCorpus corpus;
  models::ParamSet params;
  std::vector<VideoIndexRecord> index;
};

Fixture fixture() {
  Fixture f;
  SyntheticParams sp;
  sp.dim = 8;
  sp.regions = 2;
  sp.frames_min = 4;
  sp.frames_max = 6;
  f.corpus = generate_synthetic_corpus(21, 20, sp);
  Rng rng(22);
  f.params = models::make_attention_student(8, rng);
  models::merge_into(f.params, models::make_coarse_student(8, {2, 16, 4, 8}, rng));
  models::merge_into(f.params, models::make_selector(8, rng, 16));
  f.index = build_index(f.corpus.videos, f.params, models::StudentKind::kAttention);
  return f;
}

std::vector<std::string> ids(const RankedResult& r) {
  std::vector<std::string> out;
  for (const auto& e : r.entries) out.push_back(e.target_id);
  return out;
}

}  // namespace

TEST_CASE("average precision matches enumeration over small rankings") {
  std::size_t cases = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    std::vector<std::string> items;
    for (std::size_t i = 0; i < n; ++i) items.push_back("t" + std::to_string(i));
    for (std::size_t mask = 1; mask < (1u << n); ++mask) {
      std::set<std::string> relevant;
      for (std::size_t i = 0; i < n; ++i)
        if (mask & (1u << i)) relevant.insert(items[i]);
      auto perm = items;
      do {
        CHECK(average_precision(perm, relevant) == ap_oracle(perm, relevant));
        ++cases;
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }
  CHECK(cases > 40000);
}

TEST_CASE("average precision worked values") {
  CHECK(average_precision({"a", "x", "b"}, {"a", "b"}) == doctest::Approx(0.8333333333333334).epsilon(1e-15));
  CHECK(average_precision({"a", "b", "x"}, {"a", "b"}) == 1.0);
  for (std::size_t k = 1; k <= 5; ++k) {
    std::vector<std::string> r(5);
    for (std::size_t i = 0; i < 5; ++i) r[i] = "x" + std::to_string(i);
    r[k - 1] = "hit";
    CHECK(average_precision(r, {"hit"}) == doctest::Approx(1.0 / k));
  }
  CHECK(average_precision({"a"}, {"a", "missing"}) == 0.5);
  CHECK_THROWS_AS(average_precision({"a"}, {}), Error);
  CHECK(mean_average_precision({0.5, 1.0}) == 0.75);
}

TEST_CASE("re-rank counts round half up") {
  CHECK(rerank_count(0, 19) == 0);
  CHECK(rerank_count(10, 19) == 2);
  CHECK(rerank_count(5, 10) == 1);
  CHECK(rerank_count(2.5, 20) == 1);
  CHECK(rerank_count(100, 19) == 19);
  CHECK_THROWS_AS(rerank_count(-1, 5), ConfigError);
  CHECK_THROWS_AS(rerank_count(100.5, 5), ConfigError);
}

TEST_CASE("empty corpus gives an empty index") {
  Rng rng(1);
  const auto p = models::make_attention_student(4, rng);
  CHECK(build_index({}, p, models::StudentKind::kAttention).empty());
}

TEST_CASE("endpoints reproduce pure coarse and pure fine rankings") {
  const auto f = fixture();
  const Retriever ret(f.index, f.params);
  const auto policy = RoutingPolicy::random(5);
  for (const auto& q : f.index) {
    const auto targets = ret.targets_for(q);
    REQUIRE(targets.size() == f.index.size() - 1);

    std::vector<std::pair<double, std::string>> coarse, fine;
    for (std::size_t t : targets) {
      double dot = 0.0;
      for (std::size_t j = 0; j < q.coarse.size(); ++j) dot += static_cast<double>(q.coarse[j]) * f.index[t].coarse[j];
      coarse.emplace_back(dot, f.index[t].video_id);
      fine.emplace_back(ret.fine_score(q, t), f.index[t].video_id);
    }
    auto by_score = [](auto& v) {
      std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    };
    by_score(coarse);
    by_score(fine);

    const auto r0 = ret.retrieve(q, policy, 0);
    const auto r100 = ret.retrieve(q, policy, 100);
    REQUIRE(r0.entries.size() == targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
      CHECK(r0.entries[i].target_id == coarse[i].second);
      CHECK(r0.entries[i].score == coarse[i].first);
      CHECK(r0.entries[i].provenance == Provenance::kCoarse);
      CHECK(r100.entries[i].target_id == fine[i].second);
      CHECK(r100.entries[i].score == fine[i].first);
      CHECK(r100.entries[i].provenance == Provenance::kFine);
    }
  }
}

TEST_CASE("provenance counts and ranking invariants") {
  const auto f = fixture();
  const Retriever ret(f.index, f.params);
  auto sel = std::make_shared<models::ParamSet>(f.params);
  for (double p : {0.0, 5.0, 10.0, 30.0, 50.0, 100.0}) {
    for (const auto& policy : {RoutingPolicy::network(sel), RoutingPolicy::threshold(0.5), RoutingPolicy::random(3)}) {
      for (const auto& q : f.index) {
        const auto r = ret.retrieve(q, policy, p);
        std::size_t fine = 0;
        for (std::size_t i = 0; i < r.entries.size(); ++i) {
          fine += r.entries[i].provenance == Provenance::kFine;
          if (i > 0) CHECK(r.entries[i - 1].score >= r.entries[i].score);
        }
        CHECK(fine == rerank_count(p, f.index.size() - 1));
        auto got = ids(r);
        std::sort(got.begin(), got.end());
        CHECK(std::adjacent_find(got.begin(), got.end()) == got.end());
        CHECK(got.size() == f.index.size() - 1);
      }
    }
  }
  CHECK_THROWS_AS(ret.retrieve(f.index[0], RoutingPolicy::random(1), 101), ConfigError);
  CHECK_THROWS_AS(ret.find("nope"), Error);
}

TEST_CASE("evaluation agrees with retrieval and with the fine table") {
  const auto f = fixture();
  const Retriever ret(f.index, f.params);
  Relevance truth;
  for (const auto& [q, rel] : f.corpus.relevant) truth[q] = rel;
  REQUIRE_FALSE(truth.empty());
  EvalOptions opt;
  opt.timing_repeats = 0;
  const auto policy = RoutingPolicy::threshold(0.5);
  const auto report = evaluate(ret, truth, policy, opt);
  REQUIRE(report.points.size() == 5);
  for (const auto& point : report.points) {
    std::vector<double> aps;
    for (const auto& q : report.queries) {
      aps.push_back(average_precision(ids(ret.retrieve(f.index[ret.find(q)], policy, point.percent)), truth.at(q)));
    }
    CHECK(point.ap == aps);
    CHECK(point.map == mean_average_precision(aps));
    CHECK(point.sec_per_query == 0.0);
  }
  CHECK(report.bytes_per_video ==
        static_cast<double>(serialize_index(f.index).size()) / static_cast<double>(f.index.size()));

  // A supplied table gives the same report as one computed on the fly.
  opt.fine_table = std::make_shared<FineTable>(full_fine_table(ret, report.queries));
  const auto again = evaluate(ret, truth, policy, opt);
  for (std::size_t i = 0; i < again.points.size(); ++i) CHECK(again.points[i].ap == report.points[i].ap);

  const auto oracle = evaluate(ret, truth, RoutingPolicy::oracle(), opt);
  CHECK(oracle.points.front().map == report.points.front().map);
  CHECK(oracle.points.back().map == report.points.back().map);

  opt.global_pairs = true;
  const auto global = evaluate(ret, truth, policy, opt);
  CHECK(global.points.front().map == report.points.front().map);
  CHECK(global.points.back().map == report.points.back().map);
}

TEST_CASE("perfectly separable groups reach mAP one at every percentage") {
  Rng rng(7);
  auto params = models::make_attention_student(4, rng);
  models::init_comparator(params, "attn.vc", rng, true);
  std::vector<RegionFeatureTensor> videos;
  std::vector<VideoIndexRecord> index;
  Relevance truth;
  for (int g = 0; g < 4; ++g) {
    std::vector<float> v(3 * 4, 0.0f);
    for (std::size_t n = 0; n < 3; ++n) v[n * 4 + g] = 1.0f;
    for (int m = 0; m < 3; ++m) {
      const std::string id = "g" + std::to_string(g) + "m" + std::to_string(m);
      VideoIndexRecord rec;
      rec.video_id = id;
      rec.fine = models::extract_fine(params, models::StudentKind::kAttention, RegionFeatureTensor(id, 3, 1, 4, v));
      rec.coarse = std::vector<float>(4, 0.0f);
      rec.coarse[g] = 1.0f;
      index.push_back(rec);
      for (int o = 0; o < 3; ++o)
        if (o != m) truth[id].insert("g" + std::to_string(g) + "m" + std::to_string(o));
    }
  }
  models::ParamSet all = params;
  models::merge_into(all, models::make_selector(4, rng, 8));
  const Retriever ret(index, all);
  EvalOptions opt;
  opt.timing_repeats = 0;
  for (const auto& point : evaluate(ret, truth, RoutingPolicy::random(2), opt).points) CHECK(point.map == 1.0);
}

TEST_CASE("csv formats round-trip") {
  Relevance truth{{"q1", {"a", "b"}}, {"q2", {}}};
  const auto text = truth_csv(truth, {"q1", "q2", "a", "b", "c"});
  CHECK(text.rfind("query_id,target_id,relevant\n", 0) == 0);
  CHECK(parse_truth_csv(text) == truth);
  CHECK_THROWS_AS(parse_truth_csv("query_id,target_id,relevant\nq,a,2\n"), FormatError);
  CHECK_THROWS_AS(parse_truth_csv("q,t\n"), FormatError);

  EvalReport report;
  report.bytes_per_video = 1234.5;
  report.points.push_back({0.0, 0.5, {}, 0.001});
  report.points.push_back({10.0, 0.625, {}, 0.25});
  const auto csv = report_csv(report);
  CHECK(csv.rfind("percent,map,sec_per_query,bytes_per_video\n", 0) == 0);
  const auto rows = parse_report_csv(csv);
  REQUIRE(rows.size() == 2);
  CHECK(rows[1].percent == 10.0);
  CHECK(rows[1].map == 0.625);
  CHECK(rows[0].sec_per_query == 0.001);
  CHECK(rows[0].bytes_per_video == 1234.5);
  CHECK(report_csv(report) == csv);

  RankedResult r{"q", {{"a", 0.75, Provenance::kFine}, {"b", 0.5, Provenance::kCoarse}}};
  CHECK(ranking_csv({r}) == "query_id,target_id,score,provenance\nq,a,0.75,fine\nq,b,0.5,coarse\n");
}
