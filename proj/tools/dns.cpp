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
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "dns/csv.hpp"
#include "dns/error.hpp"
#include "dns/kernels.hpp"
#include "dns/parallel.hpp"
#include "dns/pipeline.hpp"
#include "dns/similarity.hpp"
#include "dns/synthetic.hpp"
#include "dns/training.hpp"

namespace fs = std::filesystem;
using namespace dns;

namespace {

models::ParamSet load_checkpoints(const std::vector<std::string>& paths) {
  models::ParamSet all;
  for (const auto& p : paths) models::merge_into(all, models::load_checkpoint(p));
  return all;
}

std::size_t feature_dim(const std::vector<RegionFeatureTensor>& videos) {
  if (videos.empty()) throw Error("no feature files found");
  for (const auto& v : videos) {
    if (v.dim() != videos.front().dim()) throw ShapeError("feature files disagree on dimension");
  }
  return videos.front().dim();
}

std::vector<RegionFeatureTensor> load_features(const std::string& dir) {
  auto videos = read_feature_dir(dir);
  feature_dim(videos);
  return videos;
}

void print_progress(const char* what, std::size_t epoch, double loss) {
  std::fprintf(stderr, "%s epoch %zu mean loss %.6f\n", what, epoch, loss);
}

void write_loss_csv(const training::KeyValueConfig& kv, const training::TrainResult& r) {
  if (kv.has("loss_csv")) write_file_bytes(kv.require("loss_csv"), training::loss_history_csv(r.loss_history));
}

int finish(const training::TrainResult& r, const std::string& out) {
  models::save_checkpoint(r.params, out);
  if (r.diverged) {
    std::cerr << "error: " << r.message << " (last finite checkpoint written to " << out << ")\n";
    return 3;
  }
  std::cerr << "wrote " << out << "\n";
  return 0;
}

training::MinedPairs mine(const std::vector<RegionFeatureTensor>& videos, const training::TrainConfig& cfg) {
  std::vector<std::vector<float>> desc;
  desc.reserve(videos.size());
  for (const auto& v : videos) desc.push_back(training::global_descriptor(v));
  auto mined = training::mine_pairs(desc, cfg.cluster_threshold, cfg.k_negatives);
  std::cerr << "mined " << mined.cluster_count << " clusters, " << mined.anchors.size() << " anchors\n";
  if (mined.anchors.empty()) throw Error("mining found no clusters; lower cluster_threshold");
  return mined;
}

std::map<std::string, std::size_t> positions(const std::vector<RegionFeatureTensor>& videos) {
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < videos.size(); ++i) pos[videos[i].video_id()] = i;
  return pos;
}

// ---- subcommands -----------------------------------------------------------

int cmd_synth(const std::string& out, std::size_t videos, std::uint64_t seed, const std::string& truth_path) {
  const auto corpus = generate_synthetic_corpus(seed, videos);
  fs::create_directories(out);
  std::vector<std::string> ids;
  for (const auto& v : corpus.videos) {
    write_features(v, fs::path(out) / (v.video_id() + ".dnsfeat"));
    ids.push_back(v.video_id());
  }
  Relevance truth;
  for (const auto& q : corpus.queries()) truth[q] = corpus.relevant.at(q);
  const std::string tpath = truth_path.empty() ? (fs::path(out) / "truth.csv").string() : truth_path;
  write_file_bytes(tpath, truth_csv(truth, ids));
  std::cerr << "wrote " << corpus.videos.size() << " videos to " << out << " and truth to " << tpath << "\n";
  return 0;
}

int cmd_train_teacher(const std::string& config_path) {
  const auto kv = training::KeyValueConfig::load(config_path);
  auto cfg = training::TrainConfig::from(kv);
  if (!kv.has("lr")) cfg.lr = 1e-5;
  const auto videos = load_features(kv.require("features"));
  const auto truth = parse_truth_csv(read_file_bytes(kv.require("truth")));
  const auto pos = positions(videos);
  training::RelevanceIndex rel;
  for (const auto& [q, targets] : truth) {
    if (!pos.count(q)) throw Error("truth refers to unknown video " + q);
    for (const auto& t : targets) {
      if (!pos.count(t)) throw Error("truth refers to unknown video " + t);
      rel[pos.at(q)].insert(pos.at(t));
    }
  }
  Rng rng(cfg.seed);
  auto init = kv.has("init") ? models::load_checkpoint(kv.require("init"))
                             : models::make_teacher(feature_dim(videos), rng);
  const auto r = training::train_teacher(videos, rel, cfg, std::move(init),
                                         [](std::size_t e, double l) { print_progress("teacher", e, l); });
  write_loss_csv(kv, r);
  return finish(r, kv.require("out"));
}

int cmd_train_student(const std::string& kind_name, const std::string& config_path) {
  const auto kind = models::parse_student(kind_name);
  const auto kv = training::KeyValueConfig::load(config_path);
  const auto cfg = training::TrainConfig::from(kv);
  const auto videos = load_features(kv.require("features"));
  const std::size_t dim = feature_dim(videos);
  Rng rng(cfg.seed);
  const auto teacher = kv.has("teacher") ? models::load_checkpoint(kv.require("teacher"))
                                         : models::make_teacher(dim, rng);
  const auto mined = mine(videos, cfg);
  const auto scores = training::precompute_teacher_scores(teacher, videos, mined);
  std::cerr << "teacher scored " << scores.size() << " pairs\n";
  models::ParamSet init;
  if (kv.has("init")) {
    init = models::load_checkpoint(kv.require("init"));
  } else if (kind == models::StudentKind::kAttention) {
    init = models::make_attention_student(dim, rng);
  } else if (kind == models::StudentKind::kBinary) {
    init = models::make_binary_student(dim, cfg.bits, rng);
    init["bin.hash.sigma"] = ad::Tensor::scalar(cfg.sigma);
  } else {
    init = models::make_coarse_student(dim, cfg.coarse, rng);
  }
  const std::string label = models::student_name(kind);
  const auto r = training::train_student(kind, videos, mined, scores, cfg, std::move(init),
                                         [&](std::size_t e, double l) { print_progress(label.c_str(), e, l); });
  write_loss_csv(kv, r);
  return finish(r, kv.require("out"));
}

int cmd_train_selector(const std::string& config_path) {
  const auto kv = training::KeyValueConfig::load(config_path);
  const auto cfg = training::TrainConfig::from(kv);
  const auto videos = load_features(kv.require("features"));
  const auto fine_kind = models::parse_student(kv.get("fine_kind", "attn"));
  const auto coarse = models::load_checkpoint(kv.require("coarse_ckpt"));
  const auto fine = models::load_checkpoint(kv.require("fine_ckpt"));
  const auto mined = mine(videos, cfg);
  std::set<std::pair<std::size_t, std::size_t>> unique;
  for (std::size_t i = 0; i < mined.anchors.size(); ++i) {
    for (std::size_t p : mined.positives[i]) unique.emplace(mined.anchors[i], p);
    for (std::size_t p : mined.negatives[i]) unique.emplace(mined.anchors[i], p);
  }
  const std::vector<std::pair<std::size_t, std::size_t>> pairs(unique.begin(), unique.end());
  const auto labelled = training::label_selector_pairs(videos, pairs, coarse, fine, fine_kind, cfg.t);
  std::size_t positive = 0;
  for (const auto& p : labelled) positive += p.label;
  std::cerr << "selector pairs: " << labelled.size() << " (" << positive << " positive)\n";
  Rng rng(cfg.seed);
  auto init = kv.has("init") ? models::load_checkpoint(kv.require("init"))
                             : models::make_selector(feature_dim(videos), rng, cfg.selector_hidden);
  const auto r = training::train_selector(videos, labelled, cfg, std::move(init),
                                          [](std::size_t e, double l) { print_progress("selector", e, l); });
  write_loss_csv(kv, r);
  return finish(r, kv.require("out"));
}

int cmd_index(const std::string& features, const std::vector<std::string>& ckpts, const std::string& student,
              const std::string& out) {
  const auto videos = read_feature_dir(features);
  const auto params = load_checkpoints(ckpts);
  const auto records = build_index(videos, params, models::parse_student(student));
  write_index(records, out);
  std::cerr << "indexed " << records.size() << " videos into " << out << "\n";
  return 0;
}

RoutingPolicy make_policy(const std::string& name, const models::ParamSet& params, std::uint64_t seed,
                          double threshold) {
  switch (parse_policy(name)) {
    case PolicyKind::kNetwork: return RoutingPolicy::network(std::make_shared<models::ParamSet>(params));
    case PolicyKind::kThreshold: return RoutingPolicy::threshold(threshold);
    case PolicyKind::kOracle: return RoutingPolicy::oracle();
    case PolicyKind::kRandom: return RoutingPolicy::random(seed);
  }
  throw ConfigError("unknown policy");
}

int cmd_query(const std::string& index_path, const std::vector<std::string>& ckpts, const std::string& query,
              const std::string& policy_name, double percent, const std::string& out, std::uint64_t seed,
              double threshold) {
  auto params = load_checkpoints(ckpts);
  Retriever retriever(read_index(index_path), params);
  VideoIndexRecord record;
  if (fs::is_regular_file(query)) {
    const auto kind = !retriever.index().empty() && retriever.index().front().is_binary()
                          ? models::StudentKind::kBinary
                          : models::StudentKind::kAttention;
    record = index_record(read_features(query), params, kind);
  } else {
    record = retriever.index()[retriever.find(query)];
  }
  auto policy = make_policy(policy_name, params, seed, threshold);
  if (policy.kind() == PolicyKind::kOracle) {
    auto table = std::make_shared<FineTable>();
    for (std::size_t t : retriever.targets_for(record)) {
      table->emplace(std::make_pair(record.video_id, retriever.index()[t].video_id),
                     retriever.fine_score(record, t));
    }
    policy = policy.with_fine_table(table);
  }
  const auto result = retriever.retrieve(record, policy, percent);
  const std::string csv = ranking_csv({result});
  if (out.empty() || out == "-") {
    std::cout << csv;
  } else {
    write_file_bytes(out, csv);
  }
  return 0;
}

std::vector<double> parse_percents(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("bad percentage '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("no percentages given");
  return out;
}

int cmd_eval(const std::string& index_path, const std::vector<std::string>& ckpts, const std::string& truth_path,
             const std::string& percents, const std::string& policy_name, const std::string& out,
             std::uint64_t seed, double threshold, bool global_pairs, std::size_t repeats) {
  const auto params = load_checkpoints(ckpts);
  Retriever retriever(read_index(index_path), params);
  const auto truth = parse_truth_csv(read_file_bytes(truth_path));
  EvalOptions options;
  options.percents = parse_percents(percents);
  options.global_pairs = global_pairs;
  options.timing_repeats = repeats;
  const auto report = evaluate(retriever, truth, make_policy(policy_name, params, seed, threshold), options);
  const std::string csv = report_csv(report);
  if (out.empty() || out == "-") {
    std::cout << csv;
  } else {
    write_file_bytes(out, csv);
  }
  for (const auto& p : report.points) {
    std::fprintf(stderr, "percent %6.2f  mAP %.4f  sec/query %.6f\n", p.percent, p.map, p.sec_per_query);
  }
  return 0;
}

template <typename F>
double median_seconds(std::size_t repeats, F&& fn) {
  std::vector<double> runs;
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    runs.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  std::sort(runs.begin(), runs.end());
  return runs[runs.size() / 2];
}

int cmd_bench(const std::string& index_path, const std::vector<std::string>& ckpts, std::size_t repeats) {
  const auto records = read_index(index_path);
  if (records.empty()) throw Error("bench: index is empty");
  std::printf("threads %zu, index %zu videos, %s fine representation\n", worker_count(), records.size(),
              records.front().is_binary() ? "binary" : "float");
  std::vector<kernels::Isa> isas{kernels::Isa::kScalar};
  if (kernels::cpu_supports(kernels::Isa::kAvx2)) isas.push_back(kernels::Isa::kAvx2);
  const auto original = kernels::active_isa();
  const std::size_t queries = std::min<std::size_t>(records.size(), 8);
  for (const auto isa : isas) {
    kernels::set_isa(isa);
    volatile double sink = 0.0;
    const double fine = median_seconds(repeats, [&] {
      for (std::size_t q = 0; q < queries; ++q) {
        for (const auto& t : records) {
          if (const auto* b = std::get_if<BinaryCodeTensor>(&records[q].fine)) {
            sink = sink + video_to_video(hamming_frame_to_frame(*b, std::get<BinaryCodeTensor>(t.fine)));
          } else {
            sink = sink + video_to_video(frame_to_frame(std::get<RegionFeatureTensor>(records[q].fine),
                                                        std::get<RegionFeatureTensor>(t.fine)));
          }
        }
      }
    });
    std::printf("%-6s frame-to-frame  %.3e s per query (%zu targets)\n",
                std::string(kernels::isa_name(isa)).c_str(), fine / queries, records.size());
  }
  kernels::set_isa(original);
  const double coarse = median_seconds(repeats, [&] {
    volatile double sink = 0.0;
    for (std::size_t q = 0; q < queries; ++q) {
      for (const auto& t : records) sink = sink + coarse_similarity(records[q].coarse, t.coarse);
    }
  });
  std::printf("coarse dot products     %.3e s per query\n", coarse / queries);
  if (!ckpts.empty()) {
    Retriever retriever(records, load_checkpoints(ckpts));
    for (double percent : {0.0, 10.0, 100.0}) {
      const auto policy = RoutingPolicy::threshold(0.0);
      const double t = median_seconds(repeats, [&] {
        for (std::size_t q = 0; q < queries; ++q) retriever.retrieve(records[q], policy, percent);
      });
      std::printf("retrieve at %5.1f%%      %.3e s per query\n", percent, t / queries);
    }
  }
  std::printf("index bytes per video   %.1f\n",
              static_cast<double>(serialize_index(records).size()) / static_cast<double>(records.size()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-stage video retrieval with distilled students and a learned router"};
  app.require_subcommand(1);

  std::string out, features, config, kind, student, index_path, query, policy = "network", truth;
  std::string percents = "0,5,10,30,100", truth_out;
  std::vector<std::string> ckpts;
  std::size_t videos = 200, repeats = 5;
  std::uint64_t seed = 1;
  double percent = 10.0, threshold = 0.5;
  bool global_pairs = false, no_timing = false;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic feature corpus and truth.csv");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--videos", videos, "Number of videos");
  synth->add_option("--seed", seed, "Generator seed");
  synth->add_option("--truth", truth_out, "Truth CSV path (default <out>/truth.csv)");

  auto* teacher = app.add_subcommand("train-teacher", "Train the teacher with triplets");
  teacher->add_option("--config", config, "key=value config file")->required();

  auto* tstudent = app.add_subcommand("train-student", "Distill a student from the teacher");
  tstudent->add_option("--kind", kind, "attn, bin or coarse")->required();
  tstudent->add_option("--config", config, "key=value config file")->required();

  auto* tselector = app.add_subcommand("train-selector", "Train the selector network");
  tselector->add_option("--config", config, "key=value config file")->required();

  auto* index = app.add_subcommand("index", "Build an index file");
  index->add_option("--features", features, "Directory of .dnsfeat files")->required();
  index->add_option("--ckpt", ckpts, "Checkpoint (repeatable)")->required();
  index->add_option("--student", student, "Fine representation: attn, bin or coarse")->required();
  index->add_option("--out", out, "Index file")->required();

  auto* q = app.add_subcommand("query", "Rank the index for one query");
  q->add_option("--index", index_path, "Index file")->required();
  q->add_option("--ckpt", ckpts, "Checkpoint (repeatable)");
  q->add_option("--query", query, "Video id in the index or a .dnsfeat file")->required();
  q->add_option("--policy", policy, "network, threshold, oracle or random");
  q->add_option("--percent", percent, "Share of targets re-ranked (0-100)");
  q->add_option("--out", out, "Ranking CSV (default stdout)");
  q->add_option("--seed", seed, "Seed of the random policy");
  q->add_option("--threshold", threshold, "Threshold policy value");

  auto* ev = app.add_subcommand("eval", "Evaluate mAP over re-ranking percentages");
  ev->add_option("--index", index_path, "Index file")->required();
  ev->add_option("--ckpt", ckpts, "Checkpoint (repeatable)");
  ev->add_option("--truth", truth, "truth.csv")->required();
  ev->add_option("--percents", percents, "Comma-separated percentages");
  ev->add_option("--policy", policy, "network, threshold, oracle or random");
  ev->add_option("--out", out, "Report CSV (default stdout)");
  ev->add_option("--seed", seed, "Seed of the random policy");
  ev->add_option("--threshold", threshold, "Threshold policy value");
  ev->add_flag("--global-pairs", global_pairs, "Percentages over all query-target pairs");
  ev->add_option("--repeat", repeats, "Timing repetitions (median)");
  ev->add_flag("--no-timing", no_timing, "Skip timing; sec_per_query is written as 0");

  auto* bench = app.add_subcommand("bench", "Time kernels and retrieval on an index");
  bench->add_option("--index", index_path, "Index file")->required();
  bench->add_option("--ckpt", ckpts, "Checkpoint (repeatable)");
  bench->add_option("--repeat", repeats, "Repetitions (median)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(out, videos, seed, truth_out);
    if (*teacher) return cmd_train_teacher(config);
    if (*tstudent) return cmd_train_student(kind, config);
    if (*tselector) return cmd_train_selector(config);
    if (*index) return cmd_index(features, ckpts, student, out);
    if (*q) return cmd_query(index_path, ckpts, query, policy, percent, out, seed, threshold);
    if (*ev) {
      return cmd_eval(index_path, ckpts, truth, percents, policy, out, seed, threshold, global_pairs,
                      no_timing ? 0 : repeats);
    }
    if (*bench) return cmd_bench(index_path, ckpts, repeats);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
