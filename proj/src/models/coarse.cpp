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

#include <cmath>
#include <string>

#include "dns/error.hpp"
#include "dns/models.hpp"

namespace dns::models {

using ad::Var;

namespace {

Var affine(Binder& b, const std::string& prefix, Var x) {
  auto& g = b.graph();
  return g.add(g.mul(x, b(prefix + ".g")), b(prefix + ".b"));
}

Var linear(Binder& b, const std::string& w, const std::string& bias, Var x) {
  auto& g = b.graph();
  return g.add(g.matmul(x, b(w)), b(bias));
}

}  // namespace

ad::Tensor sinusoidal_positions(std::size_t frames, std::size_t dim) {
  std::vector<double> v(frames * dim);
  for (std::size_t pos = 0; pos < frames; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * rate;
      v[pos * dim + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return ad::Tensor({frames, dim}, std::move(v));
}

Var transformer_layer(Binder& b, const std::string& prefix, Var frames, std::size_t heads) {
  auto& g = b.graph();
  const std::size_t dim = g.shape(frames).at(1);
  if (heads == 0 || dim % heads != 0) {
    throw ShapeError("transformer: dim " + std::to_string(dim) + " not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const std::size_t head_dim = dim / heads;
  const Var q = linear(b, prefix + ".Wq", prefix + ".bq", frames);
  const Var k = linear(b, prefix + ".Wk", prefix + ".bk", frames);
  const Var v = linear(b, prefix + ".Wv", prefix + ".bv", frames);
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> outputs;
  for (std::size_t h = 0; h < heads; ++h) {
    const Var qh = g.slice(q, 1, h * head_dim, head_dim);
    const Var kh = g.slice(k, 1, h * head_dim, head_dim);
    const Var vh = g.slice(v, 1, h * head_dim, head_dim);
    const Var attn = g.softmax(g.scale(g.matmul(qh, g.transpose(kh)), scale));
    outputs.push_back(g.matmul(attn, vh));
  }
  const Var mixed = linear(b, prefix + ".Wo", prefix + ".bo", g.concat(outputs, 1));
  const Var x1 = affine(b, prefix + ".ln1", g.layer_norm(g.add(frames, mixed)));
  const Var hidden = g.relu(linear(b, prefix + ".ff1.W", prefix + ".ff1.b", x1));
  const Var ff = linear(b, prefix + ".ff2.W", prefix + ".ff2.b", hidden);
  return affine(b, prefix + ".ln2", g.layer_norm(g.add(x1, ff)));
}

Var netvlad(Binder& b, const std::string& prefix, Var frames) {
  auto& g = b.graph();
  const Var assign = g.softmax(linear(b, prefix + ".W", prefix + ".b", frames));  // [N,K]
  const Var aggregated = g.matmul(g.transpose(assign), frames);                   // [K,D]
  const Var mass = g.sum(assign, 0);                                              // [K]
  const std::size_t clusters = g.shape(mass).at(0);
  const Var centred = g.sub(aggregated, g.mul(g.reshape(mass, {clusters, 1}), b(prefix + ".C")));
  const Var intra = g.l2_normalize(centred);
  const auto s = g.shape(intra);
  return g.l2_normalize(g.reshape(intra, {s[0] * s[1]}));
}

Var coarse_embed(Binder& b, const std::string& prefix, Var x, const CoarseOptions& options) {
  auto& g = b.graph();
  if (!options.bypass_attention) x = h_attention(b, prefix + ".att", x);
  Var frames = g.mean(x, 1);  // [N,D]
  if (!options.bypass_transformer) {
    const auto s = g.shape(frames);
    // Unit frame vectors scaled by sqrt(D) match the magnitude of the
    // sinusoidal code, so position does not drown out content.
    frames = g.scale(g.l2_normalize(frames), std::sqrt(static_cast<double>(s[1])));
    frames = g.add(frames, g.constant(sinusoidal_positions(s[0], s[1])));
    const auto heads = static_cast<std::size_t>(require(b.params(), prefix + ".tf.heads").item());
    frames = transformer_layer(b, prefix + ".tf", frames, heads);
  }
  const Var vlad = netvlad(b, prefix + ".vlad", frames);
  const std::size_t vlad_dim = g.shape(vlad).at(0);
  Var y = linear(b, prefix + ".fc.W", prefix + ".fc.b", g.reshape(vlad, {1, vlad_dim}));
  y = affine(b, prefix + ".ln", g.layer_norm(y));
  const std::size_t out = g.shape(y).at(1);
  return g.l2_normalize(g.reshape(y, {out}));
}

}  // namespace dns::models
