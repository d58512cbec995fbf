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

#include "dns/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dns/error.hpp"

namespace dns {
namespace {

using Vec = std::vector<double>;

Vec random_unit(Rng& rng, std::size_t dim) {
  Vec v(dim);
  double ss = 0.0;
  do {
    ss = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      ss += x * x;
    }
  } while (ss < 1e-12);
  const double inv = 1.0 / std::sqrt(ss);
  for (auto& x : v) x *= inv;
  return v;
}

std::string video_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "vid%05zu", index);
  return buf;
}

class Generator {
 public:
  Generator(std::uint64_t seed, const SyntheticParams& p) : rng_(seed), p_(p) {
    Rng world(p_.world_seed);
    for (std::uint32_t t = 0; t < p_.topics; ++t) {
      std::vector<Vec> basis;
      for (std::uint32_t k = 0; k < p_.topic_vectors; ++k) basis.push_back(random_unit(world, p_.dim));
      backgrounds_.push_back(std::move(basis));
    }
  }

  Rng& rng() { return rng_; }

  std::uint32_t random_topic() { return static_cast<std::uint32_t>(rng_.below(p_.topics)); }

  // A fresh video of `frames` frames (random length when 0) drawn from `topic`.
  RegionFeatureTensor source(std::uint32_t topic, std::size_t frames = 0) {
    if (frames == 0) frames = p_.frames_min + rng_.below(p_.frames_max - p_.frames_min + 1);
    const std::size_t max_scenes = std::min<std::size_t>(p_.max_scenes, frames);
    const std::size_t scenes = 1 + rng_.below(max_scenes);
    // Distinct cut points split the frames into `scenes` contiguous runs.
    std::vector<std::size_t> cuts;
    while (cuts.size() + 1 < scenes) {
      const std::size_t c = 1 + rng_.below(frames - 1);
      if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.push_back(frames);

    std::vector<float> values;
    values.reserve(frames * p_.regions * p_.dim);
    std::size_t frame = 0;
    for (std::size_t s = 0; s < scenes; ++s) {
      std::vector<Vec> contents;
      for (std::uint32_t r = 0; r < p_.regions; ++r) {
        if (p_.topic_vectors > 0 && rng_.bernoulli(p_.background_share)) {
          contents.push_back(backgrounds_[topic][rng_.below(p_.topic_vectors)]);
        } else {
          contents.push_back(random_unit(rng_, p_.dim));
        }
      }
      for (; frame < cuts[s]; ++frame) {
        for (const auto& c : contents) append_jittered(values, c, p_.frame_jitter);
      }
    }
    return RegionFeatureTensor("", static_cast<std::uint32_t>(frames), p_.regions, p_.dim,
                               std::move(values));
  }

  RegionFeatureTensor derive(const RegionFeatureTensor& anchor, std::uint32_t topic) {
    RegionFeatureTensor x = anchor;
    if (p_.temporal_edits) {
      switch (rng_.below(4)) {
        case 0: x = drop_frames(x, 0.3, rng_); break;
        case 1: x = fast_forward(x); break;
        case 2: x = slow_motion(x); break;
        default: break;
      }
    }
    if (rng_.bernoulli(p_.partial_copy_prob) && x.frames() >= 2) x = splice(x, topic);
    if (p_.noise > 0.0) x = add_noise(x);
    return x;
  }

 private:
  void append_jittered(std::vector<float>& out, const Vec& center, double jitter) {
    Vec v = center;
    if (jitter > 0.0) {
      for (auto& x : v) x += jitter * rng_.normal();
    }
    double ss = 0.0;
    for (double x : v) ss += x * x;
    const double inv = 1.0 / std::sqrt(ss);
    for (double x : v) out.push_back(static_cast<float>(x * inv));
  }

  // Keeps a contiguous segment of x and embeds it in unrelated same-topic footage.
  RegionFeatureTensor splice(const RegionFeatureTensor& x, std::uint32_t topic) {
    const std::size_t n = x.frames();
    const double nd = static_cast<double>(n);
    const auto keep = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(rng_.uniform(p_.partial_keep_min, p_.partial_keep_max) * nd)), 1, n);
    const std::size_t start = rng_.below(n - keep + 1);
    const std::size_t room = p_.max_frames > keep ? p_.max_frames - keep : 1;
    const std::size_t filler_len = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(rng_.uniform(p_.partial_filler_min, p_.partial_filler_max) * nd)), 1,
        room);
    const RegionFeatureTensor filler = source(topic, filler_len);
    const std::size_t at = rng_.below(filler_len + 1);

    const std::size_t stride = std::size_t{x.regions()} * x.dim();
    std::vector<float> values;
    values.reserve((keep + filler_len) * stride);
    const auto fv = filler.values();
    const auto xv = x.values();
    values.insert(values.end(), fv.begin(), fv.begin() + static_cast<std::ptrdiff_t>(at * stride));
    values.insert(values.end(), xv.begin() + static_cast<std::ptrdiff_t>(start * stride),
                  xv.begin() + static_cast<std::ptrdiff_t>((start + keep) * stride));
    values.insert(values.end(), fv.begin() + static_cast<std::ptrdiff_t>(at * stride), fv.end());
    return RegionFeatureTensor("", static_cast<std::uint32_t>(keep + filler_len), x.regions(),
                               x.dim(), std::move(values));
  }

  RegionFeatureTensor add_noise(const RegionFeatureTensor& x) {
    std::vector<float> values;
    values.reserve(x.values().size());
    const auto xv = x.values();
    for (std::size_t start = 0; start < xv.size(); start += x.dim()) {
      Vec v(xv.begin() + static_cast<std::ptrdiff_t>(start),
            xv.begin() + static_cast<std::ptrdiff_t>(start + x.dim()));
      append_jittered(values, v, p_.noise);
    }
    return RegionFeatureTensor("", x.frames(), x.regions(), x.dim(), std::move(values));
  }

  Rng rng_;
  SyntheticParams p_;
  std::vector<std::vector<Vec>> backgrounds_;
};

}  // namespace

void SyntheticParams::validate() const {
  if (frames_min == 0 || frames_max < frames_min) {
    throw ConfigError("synthetic: need 1 <= frames_min <= frames_max");
  }
  if (regions == 0 || dim == 0 || topics == 0 || max_scenes == 0) {
    throw ConfigError("synthetic: regions, dim, topics and max_scenes must be >= 1");
  }
  if (background_share < 0.0 || background_share > 1.0 || distractor_fraction < 0.0 ||
      distractor_fraction >= 1.0 || partial_copy_prob < 0.0 || partial_copy_prob > 1.0) {
    throw ConfigError("synthetic: probabilities out of range");
  }
  if (noise < 0.0 || frame_jitter < 0.0) throw ConfigError("synthetic: negative noise");
  if (!(partial_keep_min > 0.0 && partial_keep_min <= partial_keep_max && partial_keep_max <= 1.0)) {
    throw ConfigError("synthetic: need 0 < partial_keep_min <= partial_keep_max <= 1");
  }
  if (!(partial_filler_min >= 0.0 && partial_filler_min <= partial_filler_max)) {
    throw ConfigError("synthetic: need 0 <= partial_filler_min <= partial_filler_max");
  }
  if (max_frames < 2) throw ConfigError("synthetic: max_frames must be at least 2");
}

std::vector<std::string> SyntheticCorpus::queries() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (roles[i] == VideoRole::kAnchor && relevant.count(videos[i].video_id())) {
      out.push_back(videos[i].video_id());
    }
  }
  return out;
}

std::size_t SyntheticCorpus::find(const std::string& id) const {
  for (std::size_t i = 0; i < videos.size(); ++i) {
    if (videos[i].video_id() == id) return i;
  }
  throw Error("synthetic corpus: unknown video id '" + id + "'");
}

SyntheticCorpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n_videos,
                                          const SyntheticParams& params) {
  if (n_videos < 2) throw ConfigError("synthetic: n_videos must be >= 2");
  params.validate();
  Generator gen(seed, params);
  SyntheticCorpus corpus;
  auto push = [&](RegionFeatureTensor x, VideoRole role, int source, std::uint32_t topic) {
    x.set_video_id(video_name(corpus.videos.size()));
    corpus.videos.push_back(std::move(x));
    corpus.roles.push_back(role);
    corpus.source.push_back(source);
    corpus.topic.push_back(topic);
  };

  const auto distractors =
      static_cast<std::size_t>(std::floor(params.distractor_fraction * static_cast<double>(n_videos)));
  const std::size_t grouped = n_videos - distractors;
  while (corpus.videos.size() < grouped) {
    const std::uint32_t topic = gen.random_topic();
    const auto anchor_index = static_cast<int>(corpus.videos.size());
    push(gen.source(topic), VideoRole::kAnchor, -1, topic);
    const RegionFeatureTensor& anchor = corpus.videos.back();
    const std::string anchor_id = anchor.video_id();
    const RegionFeatureTensor anchor_copy = anchor;
    for (std::uint32_t k = 0; k < params.positives_per_anchor && corpus.videos.size() < grouped; ++k) {
      push(gen.derive(anchor_copy, topic), VideoRole::kPositive, anchor_index, topic);
      corpus.relevant[anchor_id].insert(corpus.videos.back().video_id());
    }
  }
  while (corpus.videos.size() < n_videos) {
    const std::uint32_t topic = gen.random_topic();
    push(gen.source(topic), VideoRole::kDistractor, -1, topic);
  }
  return corpus;
}

RegionFeatureTensor select_frames(const RegionFeatureTensor& x,
                                  const std::vector<std::size_t>& frames) {
  const std::size_t stride = std::size_t{x.regions()} * x.dim();
  std::vector<float> values;
  values.reserve(frames.size() * stride);
  for (std::size_t f : frames) {
    if (f >= x.frames()) throw ShapeError("select_frames: frame index out of range");
    const float* src = x.frame_data(f);
    values.insert(values.end(), src, src + stride);
  }
  return RegionFeatureTensor(x.video_id(), static_cast<std::uint32_t>(frames.size()), x.regions(),
                             x.dim(), std::move(values));
}

RegionFeatureTensor drop_frames(const RegionFeatureTensor& x, double drop_prob, Rng& rng) {
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < x.frames(); ++f) {
    if (!rng.bernoulli(drop_prob)) kept.push_back(f);
  }
  if (kept.empty()) kept.push_back(rng.below(x.frames()));
  return select_frames(x, kept);
}

RegionFeatureTensor fast_forward(const RegionFeatureTensor& x) {
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < x.frames(); f += 2) kept.push_back(f);
  return select_frames(x, kept);
}

RegionFeatureTensor slow_motion(const RegionFeatureTensor& x) {
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < x.frames(); ++f) {
    kept.push_back(f);
    kept.push_back(f);
  }
  return select_frames(x, kept);
}

}  // namespace dns
