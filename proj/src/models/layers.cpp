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

#include "dns/error.hpp"
#include "dns/models.hpp"

namespace dns::models {

using ad::Var;

Var video_constant(ad::Graph& g, const RegionFeatureTensor& x) {
  const auto v = x.values();
  return g.constant(ad::Tensor({x.frames(), x.regions(), x.dim()},
                               std::vector<double>(v.begin(), v.end())));
}

namespace {

// [N,R,D] -> [N*R,D]
Var flatten_regions(ad::Graph& g, Var x) {
  const auto& s = g.shape(x);
  if (s.size() != 3) throw ShapeError("expected a [N,R,D] video tensor, got " + ad::shape_string(s));
  return g.reshape(x, {s[0] * s[1], s[2]});
}

Var as_region_weights(ad::Graph& g, Var column, const ad::Shape& video) {
  return g.reshape(column, {video[0], video[1], 1});
}

}  // namespace

Var l2_attention_weights(Binder& b, const std::string& prefix, Var x) {
  auto& g = b.graph();
  const ad::Shape video = g.shape(x);
  const Var u = g.l2_normalize(b(prefix + ".u"));
  const Var dots = g.matmul(flatten_regions(g, x), g.reshape(u, {video[2], 1}));
  return as_region_weights(g, g.scale(g.add_scalar(dots, 1.0), 0.5), video);
}

Var l2_attention(Binder& b, const std::string& prefix, Var x) {
  return b.graph().mul(x, l2_attention_weights(b, prefix, x));
}

Var h_attention_weights(Binder& b, const std::string& prefix, Var x) {
  auto& g = b.graph();
  const ad::Shape video = g.shape(x);
  const Var hidden = g.tanh(g.add(g.matmul(flatten_regions(g, x), b(prefix + ".W")), b(prefix + ".b")));
  const Var u = g.reshape(b(prefix + ".u"), {video[2], 1});
  return as_region_weights(g, g.sigmoid(g.matmul(hidden, u)), video);
}

Var h_attention(Binder& b, const std::string& prefix, Var x) {
  return b.graph().mul(x, h_attention_weights(b, prefix, x));
}

Var binarize_train(Binder& b, const std::string& prefix, Var x, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("binarize: sigma must be positive");
  auto& g = b.graph();
  const ad::Shape video = g.shape(x);
  const Var w = b(prefix + ".W");
  const std::size_t bits = g.shape(w).at(1);
  const Var pre = g.matmul(flatten_regions(g, x), w);
  const Var codes = g.erf(pre, 1.0 / std::sqrt(2.0 * sigma * sigma));
  return g.reshape(codes, {video[0], video[1], bits});
}

Var frame_to_frame(ad::Graph& g, Var q, Var p) {
  const Var dots = g.tensordot(q, p, {2}, {2});  // [Nq,Rq,Np,Rp]
  return g.mean(g.max(dots, 3), 1);
}

Var hamming_frame_to_frame(ad::Graph& g, Var q, Var p) {
  const double bits = static_cast<double>(g.shape(q).at(2));
  return g.scale(frame_to_frame(g, q, p), 1.0 / bits);
}

Var self_similarity(ad::Graph& g, Var x) {
  const Var dots = g.tensordot(x, x, {2}, {2});  // [N,R,N,R]
  return g.mean(g.mean(dots, 3), 1);
}

Var video_to_video(ad::Graph& g, Var mv) { return g.mean(g.max(g.htanh(mv), 1), 0); }

std::vector<std::size_t> symmetric_pad_indices(std::size_t n, std::size_t target) {
  std::vector<std::size_t> idx;
  if (n == 0) throw ShapeError("symmetric padding of an empty axis");
  const std::size_t total = target > n ? target - n : 0;
  const auto before = static_cast<std::ptrdiff_t>(total / 2);
  const auto len = static_cast<std::ptrdiff_t>(n);
  for (std::ptrdiff_t i = -before; i < len + static_cast<std::ptrdiff_t>(total) - before; ++i) {
    std::ptrdiff_t j = i;
    while (j < 0 || j >= len) j = j < 0 ? -j - 1 : 2 * len - j - 1;
    idx.push_back(static_cast<std::size_t>(j));
  }
  return idx;
}

std::uint32_t comparator_output_size(std::uint32_t n) { return (std::max<std::uint32_t>(n, 4) + 3) / 4; }

Var comparator(Binder& b, const std::string& prefix, Var m) {
  auto& g = b.graph();
  const auto s = g.shape(m);
  if (s.size() != 2) throw ShapeError("comparator expects a matrix, got " + ad::shape_string(s));
  if (s[0] < 4) m = g.index_select(m, 0, symmetric_pad_indices(s[0]));
  if (s[1] < 4) m = g.index_select(m, 1, symmetric_pad_indices(s[1]));
  const auto padded = g.shape(m);
  Var x = g.reshape(m, {1, padded[0], padded[1]});
  auto conv = [&](Var in, const char* layer) {
    return g.conv2d(in, b(prefix + ".w" + layer), b(prefix + ".b" + layer));
  };
  x = g.max_pool2d(g.relu(conv(x, "1")));
  x = g.max_pool2d(g.relu(conv(x, "2")));
  x = g.relu(conv(x, "3"));
  x = conv(x, "4");
  const auto out = g.shape(x);
  return g.reshape(x, {out[1], out[2]});
}

}  // namespace dns::models
