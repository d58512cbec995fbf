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

#include "dns/error.hpp"
#include "dns/parallel.hpp"
#include "dns/pipeline.hpp"

namespace dns {

namespace {

void check_dims(const RegionFeatureTensor& video, const models::ParamSet& params,
                models::StudentKind student) {
  auto expect = [&](const std::string& name, std::size_t axis) {
    const auto& t = models::require(params, name);
    if (t.dim(axis) != video.dim()) {
      throw ShapeError("index: video " + video.video_id() + " has dim " + std::to_string(video.dim()) +
                       " but " + name + " expects " + std::to_string(t.dim(axis)));
    }
  };
  expect("coarse.att.W", 0);
  expect("selector.att.W", 0);
  if (student == models::StudentKind::kAttention) expect("attn.att.W", 0);
  if (student == models::StudentKind::kBinary) expect("bin.hash.W", 0);
}

}  // namespace

VideoIndexRecord index_record(const RegionFeatureTensor& video, const models::ParamSet& params,
                              models::StudentKind student) {
  check_dims(video, params, student);
  VideoIndexRecord rec;
  rec.video_id = video.video_id();
  rec.fine = models::extract_fine(params, student, video);
  rec.coarse = models::coarse_vector(params, video);
  rec.self_sim = models::self_similarity_value(params, video);
  return rec;
}

std::vector<VideoIndexRecord> build_index(const std::vector<RegionFeatureTensor>& videos,
                                          const models::ParamSet& params, models::StudentKind student) {
  std::vector<VideoIndexRecord> out(videos.size());
  parallel_for(videos.size(), [&](std::size_t i) { out[i] = index_record(videos[i], params, student); });
  return out;
}

}  // namespace dns
