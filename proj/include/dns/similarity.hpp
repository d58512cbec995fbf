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
#include <span>
#include <vector>

#include "dns/feature_store.hpp"

namespace dns {

// Dense rows x cols matrix, float32 row-major.
struct SimilarityMatrix {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values;

  SimilarityMatrix() = default;
  SimilarityMatrix(std::uint32_t r, std::uint32_t c) : rows(r), cols(c), values(std::size_t{r} * c) {}
  SimilarityMatrix(std::uint32_t r, std::uint32_t c, std::vector<float> v);

  float& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
  float at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  bool empty() const noexcept { return values.empty(); }

  friend bool operator==(const SimilarityMatrix&, const SimilarityMatrix&) = default;
};

// Chamfer frame-to-frame similarity:
// M[i,k] = (1/R_q) sum_j max_l <Q[i,j], P[k,l]>.
SimilarityMatrix frame_to_frame(const RegionFeatureTensor& q, const RegionFeatureTensor& p);

// Same Chamfer over packed +-1 codes with region similarity <q,p>/L.
SimilarityMatrix hamming_frame_to_frame(const BinaryCodeTensor& q, const BinaryCodeTensor& p);

// (1/rows) sum_i max_j Htanh(M[i,j]).
double video_to_video(const SimilarityMatrix& mv);

// M[i,k] = (1/R^2) sum_j sum_l <X[i,j], X[k,l]>, exactly symmetric.
SimilarityMatrix self_similarity_matrix(const RegionFeatureTensor& x);

// Mean over all entries.
double self_similarity_score(const SimilarityMatrix& mv);

double coarse_similarity(std::span<const float> a, std::span<const float> b);

// One query against many targets. Targets are processed in parallel
// (DNS_THREADS) and each result lands in its own slot.
std::vector<SimilarityMatrix> frame_to_frame_batch(
    const RegionFeatureTensor& q, std::span<const RegionFeatureTensor* const> targets);
std::vector<SimilarityMatrix> hamming_frame_to_frame_batch(
    const BinaryCodeTensor& q, std::span<const BinaryCodeTensor* const> targets);
std::vector<double> coarse_similarity_batch(std::span<const float> q,
                                            std::span<const std::vector<float>* const> targets);

}  // namespace dns
