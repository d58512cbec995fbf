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

#include <string>

#include "dns/error.hpp"
#include "dns/feature_store.hpp"

namespace dns {

BinaryCodeTensor pack_codes(std::string video_id, std::uint32_t frames,
                            std::uint32_t regions, std::uint32_t bits,
                            std::span<const std::int8_t> codes) {
  const std::size_t expected = std::size_t{frames} * regions * bits;
  if (codes.size() != expected) {
    throw ShapeError("pack_codes: expected " + std::to_string(expected) + " codes, got " +
                     std::to_string(codes.size()));
  }
  const std::size_t wpr = (bits + 63) / 64;
  std::vector<std::uint64_t> words(std::size_t{frames} * regions * wpr, 0);
  std::size_t src = 0;
  for (std::size_t n = 0; n < frames; ++n) {
    for (std::size_t r = 0; r < regions; ++r) {
      std::uint64_t* dst = words.data() + (n * regions + r) * wpr;
      for (std::size_t l = 0; l < bits; ++l, ++src) {
        const std::int8_t c = codes[src];
        if (c == 1) {
          dst[l / 64] |= std::uint64_t{1} << (l % 64);
        } else if (c != -1) {
          throw FormatError("pack_codes: entry " + std::to_string(c) + " at (" +
                            std::to_string(n) + "," + std::to_string(r) + "," +
                            std::to_string(l) + ") is not +-1");
        }
      }
    }
  }
  return BinaryCodeTensor(std::move(video_id), frames, regions, bits, std::move(words));
}

std::vector<std::int8_t> unpack_codes(const BinaryCodeTensor& codes) {
  std::vector<std::int8_t> out;
  out.reserve(std::size_t{codes.frames()} * codes.regions() * codes.bits());
  for (std::size_t n = 0; n < codes.frames(); ++n) {
    for (std::size_t r = 0; r < codes.regions(); ++r) {
      const auto words = codes.region_words(n, r);
      for (std::size_t l = 0; l < codes.bits(); ++l) {
        out.push_back(((words[l / 64] >> (l % 64)) & 1U) ? 1 : -1);
      }
    }
  }
  return out;
}

}  // namespace dns
