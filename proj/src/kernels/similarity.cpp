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

#include "dns/similarity.hpp"

#include <algorithm>
#include <limits>
#include <string>

#include "dns/error.hpp"
#include "dns/kernels.hpp"
#include "dns/parallel.hpp"

namespace dns {

SimilarityMatrix::SimilarityMatrix(std::uint32_t r, std::uint32_t c, std::vector<float> v)
    : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != std::size_t{r} * c) {
    throw ShapeError("similarity matrix: expected " + std::to_string(std::size_t{r} * c) +
                     " values, got " + std::to_string(values.size()));
  }
}

SimilarityMatrix frame_to_frame(const RegionFeatureTensor& q, const RegionFeatureTensor& p) {
  if (q.dim() != p.dim()) {
    throw ShapeError("frame_to_frame: dimension mismatch " + std::to_string(q.dim()) + " vs " +
                     std::to_string(p.dim()));
  }
  const auto& k = kernels::active();
  SimilarityMatrix m(q.frames(), p.frames());
  std::vector<float> maxima(q.regions());
  for (std::size_t i = 0; i < q.frames(); ++i) {
    for (std::size_t f = 0; f < p.frames(); ++f) {
      k.region_max(q.frame_data(i), q.regions(), p.frame_data(f), p.regions(), q.dim(),
                   maxima.data());
      double acc = 0.0;
      for (float v : maxima) acc += v;
      m.at(i, f) = static_cast<float>(acc / q.regions());
    }
  }
  return m;
}

SimilarityMatrix hamming_frame_to_frame(const BinaryCodeTensor& q, const BinaryCodeTensor& p) {
  if (q.bits() != p.bits()) {
    throw ShapeError("hamming_frame_to_frame: code length mismatch " + std::to_string(q.bits()) +
                     " vs " + std::to_string(p.bits()));
  }
  const auto& k = kernels::active();
  const std::size_t words = q.words_per_region();
  const std::int64_t bits = q.bits();
  const double denom = static_cast<double>(bits) * q.regions();
  SimilarityMatrix m(q.frames(), p.frames());
  std::vector<std::uint32_t> distances(q.regions());
  for (std::size_t i = 0; i < q.frames(); ++i) {
    const std::uint64_t* qi = q.region_words(i, 0).data();
    for (std::size_t f = 0; f < p.frames(); ++f) {
      k.region_min_distance(qi, q.regions(), p.region_words(f, 0).data(), p.regions(), words,
                            distances.data());
      // Padding bits are zero in both codes, so they never add to a distance.
      std::int64_t acc = 0;
      for (std::uint32_t d : distances) acc += bits - 2 * static_cast<std::int64_t>(d);
      m.at(i, f) = static_cast<float>(static_cast<double>(acc) / denom);
    }
  }
  return m;
}

double video_to_video(const SimilarityMatrix& mv) {
  if (mv.empty()) throw ShapeError("video_to_video: empty matrix");
  double acc = 0.0;
  for (std::size_t i = 0; i < mv.rows; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < mv.cols; ++j) {
      best = std::max(best, std::clamp(static_cast<double>(mv.at(i, j)), -1.0, 1.0));
    }
    acc += best;
  }
  return acc / mv.rows;
}

SimilarityMatrix self_similarity_matrix(const RegionFeatureTensor& x) {
  const auto& k = kernels::active();
  const std::size_t regions = x.regions();
  const std::size_t dim = x.dim();
  const double norm = static_cast<double>(regions) * static_cast<double>(regions);
  SimilarityMatrix m(x.frames(), x.frames());
  for (std::size_t i = 0; i < x.frames(); ++i) {
    for (std::size_t f = i; f < x.frames(); ++f) {
      double acc = 0.0;
      for (std::size_t j = 0; j < regions; ++j) {
        for (std::size_t l = 0; l < regions; ++l) {
          acc += k.dot(x.frame_data(i) + j * dim, x.frame_data(f) + l * dim, dim);
        }
      }
      const auto value = static_cast<float>(acc / norm);
      m.at(i, f) = value;
      m.at(f, i) = value;
    }
  }
  return m;
}

double self_similarity_score(const SimilarityMatrix& mv) {
  if (mv.empty()) throw ShapeError("self_similarity_score: empty matrix");
  double acc = 0.0;
  for (float v : mv.values) acc += v;
  return acc / static_cast<double>(mv.values.size());
}

double coarse_similarity(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) {
    throw ShapeError("coarse_similarity: dimension mismatch " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += double{a[i]} * b[i];
  return acc;
}

std::vector<SimilarityMatrix> frame_to_frame_batch(
    const RegionFeatureTensor& q, std::span<const RegionFeatureTensor* const> targets) {
  std::vector<SimilarityMatrix> out(targets.size());
  parallel_for(targets.size(), [&](std::size_t t) { out[t] = frame_to_frame(q, *targets[t]); });
  return out;
}

std::vector<SimilarityMatrix> hamming_frame_to_frame_batch(
    const BinaryCodeTensor& q, std::span<const BinaryCodeTensor* const> targets) {
  std::vector<SimilarityMatrix> out(targets.size());
  parallel_for(targets.size(),
               [&](std::size_t t) { out[t] = hamming_frame_to_frame(q, *targets[t]); });
  return out;
}

std::vector<double> coarse_similarity_batch(std::span<const float> q,
                                            std::span<const std::vector<float>* const> targets) {
  std::vector<double> out(targets.size());
  parallel_for(targets.size(), [&](std::size_t t) { out[t] = coarse_similarity(q, *targets[t]); });
  return out;
}

}  // namespace dns
