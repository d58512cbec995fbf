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

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dns/feature_store.hpp"
#include "dns/graph.hpp"
#include "dns/random.hpp"

namespace dns::test {

inline ad::Tensor random_tensor(Rng& rng, ad::Shape shape, double scale = 1.0) {
  std::vector<double> v(ad::element_count(shape));
  for (auto& x : v) x = rng.normal() * scale;
  return ad::Tensor(std::move(shape), std::move(v));
}

inline std::vector<float> random_unit_rows(Rng& rng, std::size_t rows, std::size_t dim) {
  std::vector<float> out(rows * dim);
  for (std::size_t r = 0; r < rows; ++r) {
    double ss = 0.0;
    std::vector<double> v(dim);
    for (auto& x : v) {
      x = rng.normal();
      ss += x * x;
    }
    for (std::size_t d = 0; d < dim; ++d) out[r * dim + d] = static_cast<float>(v[d] / std::sqrt(ss));
  }
  return out;
}

inline RegionFeatureTensor random_video(Rng& rng, std::uint32_t n, std::uint32_t r,
                                        std::uint32_t d, std::string id = "v") {
  return RegionFeatureTensor(std::move(id), n, r, d, random_unit_rows(rng, std::size_t{n} * r, d));
}

// Builds a scalar graph from `build` and checks every trainable leaf with
// central differences. Draws that land within `margin` of a kink are redrawn.
// Returns the worst relative error seen over `trials` accepted draws. Leaves
// larger than `max_entries` are probed at evenly spaced entries.
inline double gradient_sweep(
    Rng& rng, int trials,
    const std::function<ad::Var(ad::Graph&, Rng&)>& build, double step = 1e-5,
    double margin = 1e-3, std::size_t max_entries = 64) {
  double worst = 0.0;
  int accepted = 0;
  int attempts = 0;
  while (accepted < trials) {
    if (++attempts > trials * 50) throw std::runtime_error("gradient_sweep: too many rejected draws");
    ad::Graph g;
    const ad::Var out = build(g, rng);
    g.mark_output("out", out);
    g.forward();
    if (g.kink_margin() < margin) continue;
    for (const auto& leaf : g.trainable_leaves()) {
      worst = std::max(worst, ad::finite_difference_check(g, leaf, step, max_entries));
    }
    ++accepted;
  }
  return worst;
}

// Reduces any node to a scalar with fixed random weights so that no gradient
// is structurally zero.
inline ad::Var weighted_sum(ad::Graph& g, ad::Var x, Rng& rng) {
  const auto w = g.constant(random_tensor(rng, g.shape(x)));
  return g.sum_all(g.mul(x, w));
}

}  // namespace dns::test
