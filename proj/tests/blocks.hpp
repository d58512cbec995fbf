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

// Random small configurations of every trainable block, each reduced to a
// scalar so finite differences can probe all parameters.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dns/models.hpp"
#include "support.hpp"

namespace dns::test {

using BlockBuilder = std::function<ad::Var(ad::Graph&, Rng&)>;

inline std::uint32_t small(Rng& rng, std::uint32_t lo, std::uint32_t hi) {
  return lo + static_cast<std::uint32_t>(rng.below(hi - lo + 1));
}

// Randomizes every float parameter so zero-initialized biases do not hide
// gradient paths.
inline models::ParamSet jitter(models::ParamSet p, Rng& rng, double scale = 0.1) {
  for (auto& [name, t] : p) {
    if (!models::is_trainable(name)) continue;
    std::vector<double> v(t.values().begin(), t.values().end());
    for (auto& x : v) x += scale * rng.normal();
    t = ad::Tensor(t.shape(), std::move(v));
  }
  return p;
}

inline std::vector<std::pair<std::string, BlockBuilder>> block_builders() {
  std::vector<std::pair<std::string, BlockBuilder>> out;
  out.emplace_back("h-attention", [](ad::Graph& g, Rng& r) {
    const auto d = small(r, 2, 6);
    models::ParamSet p;
    models::init_h_attention(p, "a", d, r);
    p = jitter(p, r);
    models::Binder b(g, p, true);
    const auto x = models::video_constant(g, random_video(r, small(r, 1, 3), small(r, 1, 3), d));
    return weighted_sum(g, models::h_attention(b, "a", x), r);
  });
  out.emplace_back("l2-attention", [](ad::Graph& g, Rng& r) {
    const auto d = small(r, 2, 6);
    models::ParamSet p;
    models::init_l2_attention(p, "a", d, r);
    models::Binder b(g, p, true);
    const auto x = models::video_constant(g, random_video(r, small(r, 1, 3), small(r, 1, 3), d));
    return weighted_sum(g, models::l2_attention(b, "a", x), r);
  });
  out.emplace_back("binarize-train", [](ad::Graph& g, Rng& r) {
    const auto d = small(r, 2, 6);
    models::ParamSet p;
    models::init_binarization(p, "h", d, small(r, 1, 9), r);
    models::Binder b(g, p, true);
    const auto x = models::video_constant(g, random_video(r, small(r, 1, 3), small(r, 1, 3), d));
    // A wide surrogate keeps the finite-difference step inside the smooth region.
    return weighted_sum(g, models::binarize_train(b, "h", x, 0.5 + r.uniform()), r);
  });
  out.emplace_back("video-comparator", [](ad::Graph& g, Rng& r) {
    models::ParamSet p;
    models::init_comparator(p, "vc", r, false);
    p = jitter(p, r, 0.05);
    models::Binder b(g, p, true);
    const ad::Shape shape{small(r, 2, 9), small(r, 2, 9)};
    const auto m = g.constant(random_tensor(r, shape, 0.5));
    return weighted_sum(g, models::comparator(b, "vc", m), r);
  });
  out.emplace_back("transformer-layer", [](ad::Graph& g, Rng& r) {
    const std::size_t heads = small(r, 1, 2);
    // Layer norm over fewer than 3 features is nearly constant, and a single
    // frame gives the query/key weights no gradient at all.
    const std::size_t d = heads * small(r, 3, 4);
    models::ParamSet p;
    models::init_coarse(p, "c", d, {heads, small(r, 2, 6), 2, 3}, r);
    p = jitter(models::subset(p, "c.tf"), r, 0.2);
    models::Binder b(g, p, true);
    const auto frames = g.constant(random_tensor(r, {small(r, 2, 4), d}));
    return weighted_sum(g, models::transformer_layer(b, "c.tf", frames, heads), r);
  });
  out.emplace_back("netvlad", [](ad::Graph& g, Rng& r) {
    const std::size_t d = small(r, 2, 5);
    models::ParamSet p;
    models::init_coarse(p, "c", d, {1, 2, small(r, 1, 4), 3}, r);
    p = jitter(models::subset(p, "c.vlad"), r);
    models::Binder b(g, p, true);
    const auto frames = g.constant(random_tensor(r, {small(r, 1, 5), d}));
    return weighted_sum(g, models::netvlad(b, "c.vlad", frames), r);
  });
  out.emplace_back("coarse-student", [](ad::Graph& g, Rng& r) {
    const std::size_t d = 4;
    models::ParamSet p;
    models::init_coarse(p, "coarse", d, {2, 6, 3, 5}, r);
    p = jitter(p, r, 0.05);
    models::Binder b(g, p, true);
    const auto x = models::video_constant(g, random_video(r, small(r, 1, 4), small(r, 1, 3), d));
    return weighted_sum(g, models::coarse_embed(b, "coarse", x), r);
  });
  out.emplace_back("selector-mlp", [](ad::Graph& g, Rng& r) {
    models::ParamSet p;
    models::init_selector(p, "s", 4, small(r, 2, 8), r);
    p = jitter(p, r);
    models::Binder b(g, p, true);
    const std::size_t batch = small(r, 3, 6);  // batch norm over 2 rows is nearly constant
    const auto z = g.constant(random_tensor(r, {batch, 3}));
    Rng dropout(r.next());
    return weighted_sum(g, models::selector_logits(b, "s", z, true, &dropout), r);
  });
  return out;
}

}  // namespace dns::test
