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
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dns/feature_store.hpp"
#include "dns/random.hpp"

namespace dns {

// Knobs of the synthetic corpus. Videos are sequences of scenes; each scene
// owns R region "contents" that are either shared topic background vectors or
// vectors unique to the source video. Frames jitter around their scene.
struct SyntheticParams {
  std::uint32_t frames_min = 8;
  std::uint32_t frames_max = 16;
  std::uint32_t regions = 4;
  std::uint32_t dim = 16;
  std::uint32_t topics = 4;
  std::uint32_t topic_vectors = 3;
  // Topic backgrounds are drawn from this seed, not the corpus seed, so
  // corpora generated with different seeds share one feature domain.
  std::uint64_t world_seed = 0;
  std::uint32_t max_scenes = 3;
  double background_share = 0.5;
  double frame_jitter = 0.05;
  double noise = 0.1;
  std::uint32_t positives_per_anchor = 2;
  double distractor_fraction = 0.3;
  bool temporal_edits = true;
  double partial_copy_prob = 0.5;
  // A partial copy keeps a contiguous share of the source in [keep_min,
  // keep_max] and surrounds it with same-topic filler whose length is a
  // multiple of the source length in [filler_min, filler_max].
  double partial_keep_min = 0.6;
  double partial_keep_max = 1.0;
  double partial_filler_min = 1.0;
  double partial_filler_max = 2.0;
  std::uint32_t max_frames = 32;

  void validate() const;
};

enum class VideoRole : std::uint8_t { kAnchor, kPositive, kDistractor };

struct SyntheticCorpus {
  std::vector<RegionFeatureTensor> videos;
  std::vector<VideoRole> roles;
  std::vector<int> source;  // index of the anchor a positive derives from, else -1
  std::vector<std::uint32_t> topic;
  // Anchor id -> ids of the videos derived from it.
  std::map<std::string, std::set<std::string>> relevant;

  std::vector<std::string> queries() const;
  std::size_t find(const std::string& id) const;
};

SyntheticCorpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n_videos,
                                          const SyntheticParams& params = {});

// Temporal edits shared by corpus generation and training augmentation.
RegionFeatureTensor select_frames(const RegionFeatureTensor& x,
                                  const std::vector<std::size_t>& frames);
RegionFeatureTensor drop_frames(const RegionFeatureTensor& x, double drop_prob, Rng& rng);
RegionFeatureTensor fast_forward(const RegionFeatureTensor& x);
RegionFeatureTensor slow_motion(const RegionFeatureTensor& x);

}  // namespace dns
