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
#include <sstream>

#include "dns/error.hpp"
#include "dns/parallel.hpp"
#include "dns/training.hpp"

namespace dns::training {

using ad::Var;
using models::ParamSet;

namespace {

constexpr double kRunningMomentum = 0.1;

// One sample's loss graph. `loss` is differentiated; `report` is averaged
// into the epoch history.
struct SampleLoss {
  Var loss;
  Var report;
};

using SampleBuilder = std::function<SampleLoss(models::Binder&, std::size_t sample, Rng& rng)>;

bool all_finite(const std::map<std::string, ad::Tensor>& grads) {
  for (const auto& [name, g] : grads) {
    for (double v : g.values()) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

// Runs mini-batch Adam over per-epoch sample lists. Samples of a batch are
// evaluated in parallel, each with its own graph and seed; gradients are
// reduced in sample order so results do not depend on the thread count.
TrainResult run_per_sample(ParamSet params, const TrainConfig& config,
                           const std::function<std::vector<std::size_t>(Rng&)>& epoch_samples,
                           const SampleBuilder& build, const ProgressFn& progress) {
  config.validate();
  TrainResult result;
  Rng rng(config.seed);
  Adam adam(config.lr);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::vector<std::size_t> samples = epoch_samples(rng);
    if (samples.empty()) throw Error("training: no samples to train on");
    double report_sum = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += config.batch) {
      const std::size_t count = std::min(config.batch, samples.size() - start);
      std::vector<std::uint64_t> seeds(count);
      for (auto& s : seeds) s = rng.next();
      std::vector<std::map<std::string, ad::Tensor>> grads(count);
      std::vector<double> losses(count), reports(count);
      parallel_for(count, [&](std::size_t i) {
        Rng local(seeds[i]);
        ad::Graph g;
        models::Binder b(g, params, true);
        const SampleLoss s = build(b, samples[start + i], local);
        g.mark_output("loss", s.loss);
        g.mark_output("report", s.report);
        const auto out = g.forward();
        losses[i] = out.at("loss").item();
        reports[i] = out.at("report").item();
        grads[i] = g.backward(s.loss, ad::Tensor::scalar(1.0));
      });
      bool finite = true;
      for (std::size_t i = 0; i < count; ++i) {
        finite = finite && std::isfinite(losses[i]) && all_finite(grads[i]);
        report_sum += reports[i];
      }
      if (!finite) {
        result.diverged = true;
        result.message = "training diverged: non-finite loss at epoch " + std::to_string(epoch + 1) +
                         "; keeping the last finite parameters";
        models::round_to_float(params);
        result.params = std::move(params);
        return result;
      }
      std::map<std::string, ad::Tensor> mean;
      for (const auto& [name, first] : grads.front()) {
        std::vector<double> acc(first.size(), 0.0);
        for (const auto& gmap : grads) {
          const auto& t = gmap.at(name);
          for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += t[j];
        }
        for (double& a : acc) a /= static_cast<double>(count);
        mean.emplace(name, ad::Tensor(first.shape(), std::move(acc)));
      }
      adam.step(params, mean);
    }
    const double epoch_loss = report_sum / static_cast<double>(samples.size());
    result.loss_history.push_back(epoch_loss);
    if (progress) progress(epoch + 1, epoch_loss);
  }
  models::round_to_float(params);
  result.params = std::move(params);
  return result;
}

Var scalar_row(ad::Graph& g, Var s) { return g.reshape(s, {1}); }

}  // namespace

RelevanceIndex relevance_index(const SyntheticCorpus& corpus) {
  RelevanceIndex out;
  for (const auto& [anchor, derived] : corpus.relevant) {
    auto& set = out[corpus.find(anchor)];
    for (const auto& id : derived) set.insert(corpus.find(id));
  }
  return out;
}

TrainResult train_teacher(const std::vector<RegionFeatureTensor>& videos, const RelevanceIndex& relevant,
                          const TrainConfig& config, ParamSet init, const ProgressFn& progress) {
  struct Triplet {
    std::size_t a, p;
  };
  std::vector<Triplet> triplets;
  for (const auto& [a, positives] : relevant) {
    for (std::size_t p : positives) triplets.push_back({a, p});
  }
  if (triplets.empty()) throw Error("train_teacher: no relevant pairs to train on");
  const std::size_t n = videos.size();
  for (const auto& t : triplets) {
    if (t.a >= n || t.p >= n) throw Error("train_teacher: relevance refers to a missing video");
  }
  auto related = [&](std::size_t a, std::size_t j) {
    if (j == a) return true;
    auto it = relevant.find(a);
    return it != relevant.end() && it->second.count(j) != 0;
  };
  for (const auto& [a, positives] : relevant) {
    if (positives.size() + 1 >= n) throw Error("train_teacher: no unrelated video available as a negative");
  }
  auto samples = [&](Rng& rng) {
    std::vector<std::size_t> idx(triplets.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(std::span<std::size_t>(idx));
    return idx;
  };
  auto build = [&](models::Binder& b, std::size_t sample, Rng& rng) {
    auto& g = b.graph();
    const Triplet& tr = triplets[sample];
    std::size_t neg = rng.below(n);
    while (related(tr.a, neg)) neg = rng.below(n);
    const auto positive = augment_temporal(videos[tr.p], rng, config.augment_p, config.frame_drop_p);
    const Var q = models::video_constant(g, videos[tr.a]);
    auto pair = [&](const RegionFeatureTensor& other, Var* mv) {
      const Var m = models::frame_to_frame(g, models::l2_attention(b, "teacher.att", q),
                                           models::l2_attention(b, "teacher.att", models::video_constant(g, other)));
      *mv = models::comparator(b, "teacher.vc", m);
      return models::video_to_video(g, *mv);
    };
    Var mv_pos, mv_neg;
    const Var s_pos = pair(positive, &mv_pos);
    const Var s_neg = pair(videos[neg], &mv_neg);
    const Var trip = triplet_loss(g, s_pos, s_neg, config.gamma);
    const Var reg = g.add(similarity_regularization(g, mv_pos), similarity_regularization(g, mv_neg));
    return SampleLoss{g.add(trip, g.scale(reg, config.simreg_weight)), trip};
  };
  return run_per_sample(std::move(init), config, samples, build, progress);
}

TrainResult train_student(models::StudentKind kind, const std::vector<RegionFeatureTensor>& videos,
                          const MinedPairs& mined,
                          const std::map<std::pair<std::size_t, std::size_t>, double>& teacher_scores,
                          const TrainConfig& config, ParamSet init, const ProgressFn& progress) {
  struct Job {
    std::size_t q, p;
    double target;
  };
  std::vector<Job> jobs;  // rebuilt each epoch
  auto target_of = [&](std::size_t q, std::size_t p) {
    auto it = teacher_scores.find({q, p});
    if (it == teacher_scores.end()) throw Error("train_student: missing teacher score for a mined pair");
    // The coarse student learns scores rescaled to [0, 1].
    return kind == models::StudentKind::kCoarse ? (it->second + 1.0) / 2.0 : it->second;
  };
  auto samples = [&](Rng& rng) {
    jobs.clear();
    for (std::size_t i = 0; i < mined.anchors.size(); ++i) {
      const std::size_t a = mined.anchors[i];
      if (!mined.positives[i].empty()) {
        const std::size_t p = mined.positives[i][rng.below(mined.positives[i].size())];
        jobs.push_back({a, p, target_of(a, p)});
      }
      if (!mined.negatives[i].empty()) {
        const std::size_t p = mined.negatives[i][rng.below(mined.negatives[i].size())];
        jobs.push_back({a, p, target_of(a, p)});
      }
    }
    std::vector<std::size_t> idx(jobs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(std::span<std::size_t>(idx));
    return idx;
  };
  auto build = [&](models::Binder& b, std::size_t sample, Rng& rng) {
    auto& g = b.graph();
    const Job& job = jobs[sample];
    const auto other = augment_temporal(videos.at(job.p), rng, config.augment_p, config.frame_drop_p);
    const Var q = models::video_constant(g, videos.at(job.q));
    const Var p = models::video_constant(g, other);
    if (kind == models::StudentKind::kCoarse) {
      const Var l1 = distill_loss(g, models::coarse_pair(b, q, p), job.target);
      return SampleLoss{l1, l1};
    }
    Var mv;
    const Var s = models::fine_student_pair(b, kind, q, p, &mv);
    const Var l1 = distill_loss(g, s, job.target);
    return SampleLoss{g.add(l1, g.scale(similarity_regularization(g, mv), config.simreg_weight)), l1};
  };
  return run_per_sample(std::move(init), config, samples, build, progress);
}

std::vector<SelectorPair> label_selector_pairs(
    const std::vector<RegionFeatureTensor>& videos,
    const std::vector<std::pair<std::size_t, std::size_t>>& pairs, const ParamSet& coarse,
    const ParamSet& fine, models::StudentKind fine_kind, double t) {
  std::vector<char> used(videos.size(), 0);
  for (const auto& [q, p] : pairs) used.at(q) = used.at(p) = 1;
  std::vector<std::vector<float>> cvec(videos.size());
  std::vector<FineRepresentation> frep(videos.size());
  parallel_for(videos.size(), [&](std::size_t i) {
    if (!used[i]) return;
    cvec[i] = models::coarse_vector(coarse, videos[i]);
    frep[i] = models::extract_fine(fine, fine_kind, videos[i]);
  });
  std::vector<SelectorPair> out(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const auto [q, p] = pairs[i];
    SelectorPair sp;
    sp.q = q;
    sp.p = p;
    double c = 0.0;
    for (std::size_t j = 0; j < cvec[q].size(); ++j) c += static_cast<double>(cvec[q][j]) * cvec[p][j];
    sp.coarse = c;
    sp.fine = (models::fine_similarity(fine, fine_kind, frep[q], frep[p]) + 1.0) / 2.0;
    sp.label = selector_label(sp.coarse, sp.fine, t);
    out[i] = sp;
  });
  return out;
}

namespace {

// Class-balanced epoch: `per_class` draws from each class, cycling through a
// fresh shuffle of the class so every member is used before any repeats.
std::vector<std::size_t> balanced_epoch(const std::vector<std::size_t>& neg,
                                        const std::vector<std::size_t>& pos, std::size_t per_class,
                                        Rng& rng) {
  std::vector<std::size_t> out;
  for (const auto* cls : {&neg, &pos}) {
    std::vector<std::size_t> pool;
    while (pool.size() < per_class) {
      std::vector<std::size_t> round = *cls;
      rng.shuffle(std::span<std::size_t>(round));
      pool.insert(pool.end(), round.begin(), round.end());
    }
    out.insert(out.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(per_class));
  }
  rng.shuffle(std::span<std::size_t>(out));
  return out;
}

void check_two_classes(const std::vector<int>& labels) {
  std::size_t pos = 0;
  for (int l : labels) pos += l != 0;
  if (pos == 0 || pos == labels.size()) {
    throw Error("train_selector: labels contain a single class (" + std::to_string(pos) +
                " positive of " + std::to_string(labels.size()) +
                "); adjust t or the training pairs");
  }
}

// Batch-level loop shared by both selector trainers: one graph per batch
// (batch norm couples the rows), running statistics updated after each step.
TrainResult run_selector(ParamSet params, const TrainConfig& config, const std::vector<int>& labels,
                         const std::function<Var(models::Binder&, const std::vector<std::size_t>&)>& features,
                         const ProgressFn& progress) {
  config.validate();
  check_two_classes(labels);
  if (config.batch < 2) throw ConfigError("train_selector: batch must be at least 2 for batch norm");
  std::vector<std::size_t> neg, pos;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(i);
  TrainResult result;
  Rng rng(config.seed);
  Adam adam(config.lr);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto samples = balanced_epoch(neg, pos, config.selector_pairs_per_class, rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < samples.size(); start += config.batch) {
      std::size_t count = std::min(config.batch, samples.size() - start);
      if (count < 2) break;  // a single trailing row has no batch statistics
      const std::vector<std::size_t> rows(samples.begin() + static_cast<std::ptrdiff_t>(start),
                                          samples.begin() + static_cast<std::ptrdiff_t>(start + count));
      ad::Graph g;
      models::Binder b(g, params, true);
      auto stats = std::make_shared<ad::BatchStats>();
      Rng dropout(rng.next());
      const Var logits = models::selector_logits(b, "selector", features(b, rows), true, &dropout, stats);
      std::vector<double> targets;
      for (std::size_t r : rows) targets.push_back(labels[r]);
      const Var loss = g.bce_with_logits(logits, g.constant(ad::Tensor({count}, std::move(targets))));
      g.mark_output("loss", loss);
      const double value = g.forward().at("loss").item();
      auto grads = g.backward(loss, ad::Tensor::scalar(1.0));
      if (!std::isfinite(value) || !all_finite(grads)) {
        result.diverged = true;
        result.message = "selector training diverged at epoch " + std::to_string(epoch + 1);
        models::round_to_float(params);
        result.params = std::move(params);
        return result;
      }
      loss_sum += value * static_cast<double>(count);
      adam.step(params, grads);
      auto update = [&](const std::string& name, const std::vector<double>& batch_value, double correction) {
        const auto& old = params.at(name);
        std::vector<double> v(old.values().begin(), old.values().end());
        for (std::size_t j = 0; j < v.size(); ++j) {
          v[j] = (1.0 - kRunningMomentum) * v[j] + kRunningMomentum * batch_value[j] * correction;
        }
        params[name] = ad::Tensor(old.shape(), std::move(v));
      };
      update("selector.bn.running_mean", stats->mean, 1.0);
      update("selector.bn.running_var", stats->variance,
             static_cast<double>(count) / static_cast<double>(count - 1));
    }
    const double epoch_loss = loss_sum / static_cast<double>(samples.size());
    result.loss_history.push_back(epoch_loss);
    if (progress) progress(epoch + 1, epoch_loss);
  }
  models::round_to_float(params);
  result.params = std::move(params);
  return result;
}

}  // namespace

TrainResult train_selector(const std::vector<RegionFeatureTensor>& videos,
                           const std::vector<SelectorPair>& pairs, const TrainConfig& config,
                           ParamSet init, const ProgressFn& progress) {
  std::vector<int> labels;
  for (const auto& p : pairs) labels.push_back(p.label);
  auto features = [&](models::Binder& b, const std::vector<std::size_t>& rows) {
    auto& g = b.graph();
    std::vector<Var> zrows;
    for (std::size_t r : rows) {
      const SelectorPair& sp = pairs[r];
      const Var sq = models::self_similarity_feature(b, models::video_constant(g, videos.at(sp.q)));
      const Var sv = models::self_similarity_feature(b, models::video_constant(g, videos.at(sp.p)));
      const Var c = g.constant(ad::Tensor({1}, {sp.coarse}));
      zrows.push_back(g.reshape(g.concat({c, scalar_row(g, sq), scalar_row(g, sv)}, 0), {1, 3}));
    }
    return g.concat(zrows, 0);
  };
  return run_selector(std::move(init), config, labels, features, progress);
}

TrainResult train_selector_mlp(const std::vector<std::array<double, 3>>& z, const std::vector<int>& labels,
                               const TrainConfig& config, ParamSet init, const ProgressFn& progress) {
  if (z.size() != labels.size()) throw ShapeError("train_selector_mlp: feature and label counts differ");
  auto features = [&](models::Binder& b, const std::vector<std::size_t>& rows) {
    std::vector<double> flat;
    for (std::size_t r : rows) flat.insert(flat.end(), z[r].begin(), z[r].end());
    return b.graph().constant(ad::Tensor({rows.size(), 3}, std::move(flat)));
  };
  return run_selector(std::move(init), config, labels, features, progress);
}

std::string loss_history_csv(const std::vector<double>& history) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,mean_loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) out << (i + 1) << ',' << history[i] << '\n';
  return out.str();
}

}  // namespace dns::training
