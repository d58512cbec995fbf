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

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace dns::kernels {

enum class Isa { kScalar, kAvx2 };

// Low-level primitives behind the similarity functions. Each instruction set
// provides one table; the active table is chosen once at startup.
struct KernelTable {
  Isa isa;
  // Inner product of two float vectors of length n.
  float (*dot)(const float* a, const float* b, std::size_t n);
  // Number of differing bits between two packed codes of `words` words.
  std::uint32_t (*xor_popcount)(const std::uint64_t* a, const std::uint64_t* b,
                                std::size_t words);
  // out[j] = max over l < p_regions of dot(q + j*dim, p + l*dim), j < q_regions.
  void (*region_max)(const float* q, std::size_t q_regions, const float* p,
                     std::size_t p_regions, std::size_t dim, float* out);
  // out[j] = min over l of xor_popcount(q_j, p_l), j < q_regions.
  void (*region_min_distance)(const std::uint64_t* q, std::size_t q_regions,
                              const std::uint64_t* p, std::size_t p_regions,
                              std::size_t words, std::uint32_t* out);
};

const KernelTable& scalar_table();
// nullptr when the library was built without the AVX2 translation unit.
const KernelTable* avx2_table();

bool cpu_supports(Isa isa);

// The table used by the similarity functions. Defaults to the best supported
// instruction set, overridable with DNS_KERNEL=scalar|avx2.
const KernelTable& active();
Isa active_isa();
// Throws dns::Error if the CPU or build lacks the instruction set.
void set_isa(Isa isa);

std::string_view isa_name(Isa isa);

}  // namespace dns::kernels
