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
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dns/feature_store.hpp"
#include "dns/models.hpp"
#include "dns/random.hpp"
#include "dns/similarity.hpp"
#include "dns/synthetic.hpp"

namespace dns::training {

// ---- losses ------------------------------------------------------------------

double triplet_loss(double sim_pos, double sim_neg, double gamma = 0.5);
// sum of max(0, |Mv[i,j]| - 1)
double similarity_regularization(std::span<const double> mv);
double similarity_regularization(const SimilarityMatrix& mv);
double distill_loss(double student, double teacher);
// 1 iff |coarse - fine| > t (strict).
int selector_label(double coarse_sim, double fine_sim, double t = 0.2);

ad::Var triplet_loss(ad::Graph& g, ad::Var sim_pos, ad::Var sim_neg, double gamma);
ad::Var similarity_regularization(ad::Graph& g, ad::Var mv);
ad::Var distill_loss(ad::Graph& g, ad::Var student, double teacher);

// ---- configuration -------------------------------------------------------------

// Plain key=value text; '#' starts a comment, blank lines are ignored.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  std::uint64_t integer(const std::string& key, std::uint64_t fallback) const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct TrainConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 30;
  std::size_t batch = 16;
  double lr = 1e-4;
  double t = 0.2;
  double gamma = 0.5;
  double sigma = models::kBinarizationSigma;
  std::size_t k_negatives = 5;
  double cluster_threshold = 0.75;
  double augment_p = 0.1;
  double frame_drop_p = 0.3;
  double simreg_weight = 1e-3;
  std::size_t bits = 64;
  models::CoarseDims coarse;
  std::size_t selector_pairs_per_class = 200;
  std::size_t selector_hidden = 100;

  // Reads the known keys, keeping defaults for absent ones. Unknown keys are
  // left for the caller (paths and the like).
  static TrainConfig from(const KeyValueConfig& kv);
  void validate() const;
};

// ---- augmentation ----------------------------------------------------------------

// Frame drop, fast-forward and slow-motion, each applied independently with
// probability p (in that order). Drop removes each frame with `drop_p`,
// keeping at least one.
RegionFeatureTensor augment_temporal(const RegionFeatureTensor& x, Rng& rng, double p = 0.1,
                                     double drop_p = 0.3);
RegionFeatureTensor augment_temporal(const RegionFeatureTensor& x, std::uint64_t seed,
                                     double p = 0.1, double drop_p = 0.3);

// ---- pair mining -------------------------------------------------------------------

// Mean-pooled, l2-normalized region vector: the global descriptor used to
// build the similarity graph before any coarse student exists.
std::vector<float> global_descriptor(const RegionFeatureTensor& x);

struct MinedPairs {
  std::vector<int> cluster;  // per video, -1 when unclustered
  std::vector<std::size_t> anchors;
  std::vector<std::vector<std::size_t>> positives;  // per anchor
  std::vector<std::vector<std::size_t>> negatives;  // per anchor
  std::size_t cluster_count = 0;
};

// Connected components of the graph linking pairs with similarity above the
// threshold; every video in a component of size >= 2 is an anchor. Negatives
// are the k most similar videos from other clusters plus the k most similar
// unclustered videos.
MinedPairs mine_pairs(const std::vector<std::vector<float>>& descriptors, double threshold,
                      std::size_t k);

struct ScoredPair {
  std::size_t q = 0;
  std::size_t p = 0;
  double teacher = 0.0;
};

// Teacher scores for every mined (anchor, positive) and (anchor, negative)
// pair, keyed by (anchor, other). Parallel over pairs.
std::map<std::pair<std::size_t, std::size_t>, double> precompute_teacher_scores(
    const models::ParamSet& teacher, const std::vector<RegionFeatureTensor>& videos,
    const MinedPairs& mined);

// Number of teacher forward passes made through teacher_similarity_counted.
std::uint64_t teacher_call_count();
double teacher_similarity_counted(const models::ParamSet& teacher, const RegionFeatureTensor& q,
                                  const RegionFeatureTensor& p);

// ---- optimizer ------------------------------------------------------------------

class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(models::ParamSet& params, const std::map<std::string, ad::Tensor>& grads);
  std::uint64_t steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

// ---- training loops -------------------------------------------------------------

struct TrainResult {
  models::ParamSet params;
  std::vector<double> loss_history;  // per-epoch mean loss
  bool diverged = false;
  std::string message;
};

using ProgressFn = std::function<void(std::size_t epoch, double mean_loss)>;

// Supervised triplets (anchor, relevant positive, unrelated negative);
// positives are augmented. `relevant` maps anchor positions to positions.
using RelevanceIndex = std::map<std::size_t, std::set<std::size_t>>;
TrainResult train_teacher(const std::vector<RegionFeatureTensor>& videos,
                          const RelevanceIndex& relevant, const TrainConfig& config,
                          models::ParamSet init, const ProgressFn& progress = {});
RelevanceIndex relevance_index(const SyntheticCorpus& corpus);

// L1 distillation on precomputed teacher scores (rescaled to [0,1] for the
// coarse student). Fine students add the similarity regularizer.
TrainResult train_student(models::StudentKind kind, const std::vector<RegionFeatureTensor>& videos,
                          const MinedPairs& mined,
                          const std::map<std::pair<std::size_t, std::size_t>, double>& teacher_scores,
                          const TrainConfig& config, models::ParamSet init,
                          const ProgressFn& progress = {});

struct SelectorPair {
  std::size_t q = 0;
  std::size_t p = 0;
  double coarse = 0.0;
  double fine = 0.0;  // rescaled to [0,1]
  int label = 0;
};

// Labels every mined pair from the two students' scores.
std::vector<SelectorPair> label_selector_pairs(const std::vector<RegionFeatureTensor>& videos,
                                               const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                               const models::ParamSet& coarse,
                                               const models::ParamSet& fine,
                                               models::StudentKind fine_kind, double t);

// Joint BCE training of the self-similarity network and the MLP over
// class-balanced samples drawn each epoch.
TrainResult train_selector(const std::vector<RegionFeatureTensor>& videos,
                           const std::vector<SelectorPair>& pairs, const TrainConfig& config,
                           models::ParamSet init, const ProgressFn& progress = {});

// Fits the MLP alone on fixed feature vectors (self-similarity inputs given).
TrainResult train_selector_mlp(const std::vector<std::array<double, 3>>& z,
                               const std::vector<int>& labels, const TrainConfig& config,
                               models::ParamSet init, const ProgressFn& progress = {});

// "epoch,mean_loss" rows, one per epoch, 1-based.
std::string loss_history_csv(const std::vector<double>& history);

}  // namespace dns::training
