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

#include "dns/kernels.hpp"

#if defined(DNS_HAVE_AVX2_TU)

#include <immintrin.h>

#include <algorithm>
#include <limits>

namespace dns::kernels {
namespace {

inline float hsum(__m256 v) {
  const __m128 lo = _mm256_castps256_ps128(v);
  const __m128 hi = _mm256_extractf128_ps(v, 1);
  __m128 s = _mm_add_ps(lo, hi);
  s = _mm_add_ps(s, _mm_movehl_ps(s, s));
  s = _mm_add_ss(s, _mm_shuffle_ps(s, s, 0x55));
  return _mm_cvtss_f32(s);
}

float dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

// Nibble-lookup popcount over 256-bit lanes, reduced with SAD.
inline __m256i popcount_bytes(__m256i v) {
  const __m256i lookup = _mm256_setr_epi8(0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4,
                                          0, 1, 1, 2, 1, 2, 2, 3, 1, 2, 2, 3, 2, 3, 3, 4);
  const __m256i low_mask = _mm256_set1_epi8(0x0f);
  const __m256i lo = _mm256_and_si256(v, low_mask);
  const __m256i hi = _mm256_and_si256(_mm256_srli_epi16(v, 4), low_mask);
  return _mm256_add_epi8(_mm256_shuffle_epi8(lookup, lo), _mm256_shuffle_epi8(lookup, hi));
}

std::uint32_t xor_popcount_avx2(const std::uint64_t* a, const std::uint64_t* b,
                                std::size_t words) {
  std::size_t w = 0;
  __m256i total = _mm256_setzero_si256();
  for (; w + 4 <= words; w += 4) {
    const __m256i x = _mm256_xor_si256(
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a + w)),
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b + w)));
    total = _mm256_add_epi64(total, _mm256_sad_epu8(popcount_bytes(x), _mm256_setzero_si256()));
  }
  std::uint64_t count = static_cast<std::uint64_t>(_mm256_extract_epi64(total, 0)) +
                        static_cast<std::uint64_t>(_mm256_extract_epi64(total, 1)) +
                        static_cast<std::uint64_t>(_mm256_extract_epi64(total, 2)) +
                        static_cast<std::uint64_t>(_mm256_extract_epi64(total, 3));
  for (; w < words; ++w) count += static_cast<std::uint64_t>(_mm_popcnt_u64(a[w] ^ b[w]));
  return static_cast<std::uint32_t>(count);
}

void region_max_avx2(const float* q, std::size_t q_regions, const float* p,
                     std::size_t p_regions, std::size_t dim, float* out) {
  for (std::size_t j = 0; j < q_regions; ++j) {
    float best = -std::numeric_limits<float>::infinity();
    for (std::size_t l = 0; l < p_regions; ++l) {
      best = std::max(best, dot_avx2(q + j * dim, p + l * dim, dim));
    }
    out[j] = best;
  }
}

void region_min_distance_avx2(const std::uint64_t* q, std::size_t q_regions,
                              const std::uint64_t* p, std::size_t p_regions,
                              std::size_t words, std::uint32_t* out) {
  for (std::size_t j = 0; j < q_regions; ++j) {
    std::uint32_t best = std::numeric_limits<std::uint32_t>::max();
    for (std::size_t l = 0; l < p_regions; ++l) {
      best = std::min(best, xor_popcount_avx2(q + j * words, p + l * words, words));
    }
    out[j] = best;
  }
}

constexpr KernelTable kAvx2{Isa::kAvx2, dot_avx2, xor_popcount_avx2, region_max_avx2,
                            region_min_distance_avx2};

}  // namespace

const KernelTable* avx2_table() { return &kAvx2; }

}  // namespace dns::kernels

#else

namespace dns::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace dns::kernels

#endif
