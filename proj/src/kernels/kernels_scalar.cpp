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
#include <limits>

#include "dns/kernels.hpp"

namespace dns::kernels {
namespace {

float dot_scalar(const float* a, const float* b, std::size_t n) {
  float acc = 0.0f;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

std::uint32_t xor_popcount_scalar(const std::uint64_t* a, const std::uint64_t* b,
                                  std::size_t words) {
  std::uint32_t count = 0;
  for (std::size_t w = 0; w < words; ++w) {
    std::uint64_t x = a[w] ^ b[w];
    // SWAR popcount keeps this path free of the popcnt instruction.
    x = x - ((x >> 1) & 0x5555555555555555ULL);
    x = (x & 0x3333333333333333ULL) + ((x >> 2) & 0x3333333333333333ULL);
    x = (x + (x >> 4)) & 0x0f0f0f0f0f0f0f0fULL;
    count += static_cast<std::uint32_t>((x * 0x0101010101010101ULL) >> 56);
  }
  return count;
}

void region_max_scalar(const float* q, std::size_t q_regions, const float* p,
                       std::size_t p_regions, std::size_t dim, float* out) {
  for (std::size_t j = 0; j < q_regions; ++j) {
    float best = -std::numeric_limits<float>::infinity();
    for (std::size_t l = 0; l < p_regions; ++l) {
      best = std::max(best, dot_scalar(q + j * dim, p + l * dim, dim));
    }
    out[j] = best;
  }
}

void region_min_distance_scalar(const std::uint64_t* q, std::size_t q_regions,
                                const std::uint64_t* p, std::size_t p_regions,
                                std::size_t words, std::uint32_t* out) {
  for (std::size_t j = 0; j < q_regions; ++j) {
    std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
    for (std::size_t l = 0; l < p_regions; ++l) {
      best = std::min(best, xor_popcount_scalar(q + j * words, p + l * words, words));
    }
    out[j] = best;
  }
}

constexpr KernelTable kScalar{Isa::kScalar, dot_scalar, xor_popcount_scalar, region_max_scalar,
                              region_min_distance_scalar};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace dns::kernels
