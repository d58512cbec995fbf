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

#include "dns/training.hpp"

namespace dns::training {

RegionFeatureTensor augment_temporal(const RegionFeatureTensor& x, Rng& rng, double p,
                                     double drop_p) {
  // Draw all three gates up front so the stream advances identically
  // whichever edits fire.
  const bool drop = rng.bernoulli(p);
  const bool fast = rng.bernoulli(p);
  const bool slow = rng.bernoulli(p);
  RegionFeatureTensor out = x;
  if (drop) out = drop_frames(out, drop_p, rng);
  if (fast) out = fast_forward(out);
  if (slow) out = slow_motion(out);
  return out;
}

RegionFeatureTensor augment_temporal(const RegionFeatureTensor& x, std::uint64_t seed, double p,
                                     double drop_p) {
  Rng rng(seed);
  return augment_temporal(x, rng, p, drop_p);
}

}  // namespace dns::training
