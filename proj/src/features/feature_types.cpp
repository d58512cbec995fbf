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

#include <cmath>
#include <string>

#include "dns/error.hpp"
#include "dns/feature_store.hpp"

namespace dns {

RegionFeatureTensor::RegionFeatureTensor(std::string video_id, std::uint32_t frames,
                                         std::uint32_t regions, std::uint32_t dim,
                                         std::vector<float> values)
    : video_id_(std::move(video_id)),
      frames_(frames),
      regions_(regions),
      dim_(dim),
      values_(std::move(values)) {
  if (frames == 0 || regions == 0 || dim == 0) {
    throw ShapeError("region tensor '" + video_id_ + "': N, R and D must be >= 1");
  }
  const std::size_t expected = std::size_t{frames} * regions * dim;
  if (values_.size() != expected) {
    throw ShapeError("region tensor '" + video_id_ + "': expected " +
                     std::to_string(expected) + " values, got " +
                     std::to_string(values_.size()));
  }
}

std::span<const float> RegionFeatureTensor::region(std::size_t frame,
                                                   std::size_t region) const {
  return std::span<const float>(values_).subspan((frame * regions_ + region) * dim_, dim_);
}

BinaryCodeTensor::BinaryCodeTensor(std::string video_id, std::uint32_t frames,
                                   std::uint32_t regions, std::uint32_t bits,
                                   std::vector<std::uint64_t> words)
    : video_id_(std::move(video_id)),
      frames_(frames),
      regions_(regions),
      bits_(bits),
      words_(std::move(words)) {
  if (frames == 0 || regions == 0 || bits == 0) {
    throw ShapeError("binary tensor '" + video_id_ + "': N, R and L must be >= 1");
  }
  const std::size_t expected = std::size_t{frames} * regions * words_per_region();
  if (words_.size() != expected) {
    throw ShapeError("binary tensor '" + video_id_ + "': expected " +
                     std::to_string(expected) + " words, got " +
                     std::to_string(words_.size()));
  }
  if (bits_ % 64 != 0) {
    const std::uint64_t padding = ~((std::uint64_t{1} << (bits_ % 64)) - 1);
    for (std::size_t w = words_per_region() - 1; w < words_.size(); w += words_per_region()) {
      words_[w] &= ~padding;
    }
  }
}

std::span<const std::uint64_t> BinaryCodeTensor::region_words(std::size_t frame,
                                                              std::size_t region) const {
  return std::span<const std::uint64_t>(words_).subspan(
      (frame * regions_ + region) * words_per_region(), words_per_region());
}

int BinaryCodeTensor::code(std::size_t frame, std::size_t region, std::size_t bit) const {
  const auto words = region_words(frame, region);
  return ((words[bit / 64] >> (bit % 64)) & 1U) ? 1 : -1;
}

void normalize_regions(std::vector<float>& values, std::size_t dim) {
  for (std::size_t start = 0; start + dim <= values.size(); start += dim) {
    double ss = 0.0;
    for (std::size_t j = 0; j < dim; ++j) ss += double{values[start + j]} * values[start + j];
    const double norm = std::sqrt(ss);
    if (norm <= 0.0) continue;
    for (std::size_t j = 0; j < dim; ++j) {
      values[start + j] = static_cast<float>(values[start + j] / norm);
    }
  }
}

}  // namespace dns
