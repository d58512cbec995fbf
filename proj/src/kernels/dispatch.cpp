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

#include <atomic>
#include <cstdlib>
#include <string>

#include "dns/error.hpp"
#include "dns/kernels.hpp"

namespace dns::kernels {
namespace {

const KernelTable* initial_table() {
  const KernelTable* best = &scalar_table();
  if (cpu_supports(Isa::kAvx2) && avx2_table() != nullptr) best = avx2_table();
  if (const char* env = std::getenv("DNS_KERNEL")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && best->isa == Isa::kAvx2) return best;
  }
  return best;
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
#if defined(__x86_64__) || defined(__i386__)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma") &&
             __builtin_cpu_supports("popcnt");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

Isa active_isa() { return active().isa; }

void set_isa(Isa isa) {
  if (isa == Isa::kScalar) {
    slot().store(&scalar_table(), std::memory_order_release);
    return;
  }
  if (!cpu_supports(isa) || avx2_table() == nullptr) {
    throw Error("kernel instruction set '" + std::string(isa_name(isa)) + "' unavailable");
  }
  slot().store(avx2_table(), std::memory_order_release);
}

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

}  // namespace dns::kernels
