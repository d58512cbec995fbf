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
namespace {

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

ad::Tensor gaussian(Rng& rng, ad::Shape shape, double sd) {
  std::vector<double> v(ad::element_count(shape));
  for (auto& x : v) x = rng.normal() * sd;
  return ad::Tensor(std::move(shape), std::move(v));
}

ad::Tensor unit_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double ss = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    ss += x * x;
  }
  for (auto& x : v) x /= std::sqrt(ss);
  return ad::Tensor({dim}, std::move(v));
}

}  // namespace

bool is_trainable(const std::string& name) {
  return !(ends_with(name, ".heads") || ends_with(name, ".sigma") ||
           ends_with(name, ".running_mean") || ends_with(name, ".running_var"));
}

void round_to_float(ParamSet& params) {
  for (auto& [name, t] : params) {
    std::vector<double> v(t.values().begin(), t.values().end());
    for (auto& x : v) x = static_cast<double>(static_cast<float>(x));
    t = ad::Tensor(t.shape(), std::move(v));
  }
}

ParamSet subset(const ParamSet& params, const std::string& prefix) {
  ParamSet out;
  const std::string key = prefix + ".";
  for (auto it = params.lower_bound(key); it != params.end() && it->first.starts_with(key); ++it) {
    out.insert(*it);
  }
  return out;
}

void merge_into(ParamSet& dst, const ParamSet& src) {
  for (const auto& [name, t] : src) dst.insert_or_assign(name, t);
}

const ad::Tensor& require(const ParamSet& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw Error("missing parameter '" + name + "'");
  return it->second;
}

ad::Var Binder::operator()(const std::string& name) {
  if (auto it = bound_.find(name); it != bound_.end()) return it->second;
  const ad::Tensor& t = require(params_, name);
  const ad::Var v = graph_.leaf(name, t, trainable_ && is_trainable(name));
  bound_.emplace(name, v);
  return v;
}

void init_l2_attention(ParamSet& p, const std::string& prefix, std::size_t dim, Rng& rng) {
  p[prefix + ".u"] = unit_vector(rng, dim);
}

void init_h_attention(ParamSet& p, const std::string& prefix, std::size_t dim, Rng& rng) {
  p[prefix + ".W"] = gaussian(rng, {dim, dim}, 1.0 / std::sqrt(static_cast<double>(dim)));
  p[prefix + ".b"] = ad::Tensor({dim});
  p[prefix + ".u"] = gaussian(rng, {dim}, 1.0 / std::sqrt(static_cast<double>(dim)));
}

void init_binarization(ParamSet& p, const std::string& prefix, std::size_t dim,
                       std::size_t bits, Rng& rng) {
  // Gram-Schmidt on the shorter side gives orthonormal rows (dim <= bits) or
  // columns (dim > bits).
  const std::size_t count = std::min(dim, bits);
  const std::size_t length = std::max(dim, bits);
  std::vector<std::vector<double>> basis;
  while (basis.size() < count) {
    std::vector<double> v(length);
    for (auto& x : v) x = rng.normal();
    for (const auto& b : basis) {
      double proj = 0.0;
      for (std::size_t i = 0; i < length; ++i) proj += v[i] * b[i];
      for (std::size_t i = 0; i < length; ++i) v[i] -= proj * b[i];
    }
    double ss = 0.0;
    for (double x : v) ss += x * x;
    if (ss < 1e-10) continue;
    for (auto& x : v) x /= std::sqrt(ss);
    basis.push_back(std::move(v));
  }
  std::vector<double> w(dim * bits);
  for (std::size_t r = 0; r < dim; ++r) {
    for (std::size_t c = 0; c < bits; ++c) {
      w[r * bits + c] = dim <= bits ? basis[r][c] : basis[c][r];
    }
  }
  p[prefix + ".W"] = ad::Tensor({dim, bits}, std::move(w));
  p[prefix + ".sigma"] = ad::Tensor::scalar(kBinarizationSigma);
}

void init_comparator(ParamSet& p, const std::string& prefix, Rng& rng, bool pass_through,
                     double noise) {
  struct Layer {
    const char* name;
    std::size_t out, in, k;
  };
  const Layer layers[] = {{"1", 32, 1, 3}, {"2", 64, 32, 3}, {"3", 128, 64, 3}, {"4", 1, 128, 1}};
  for (const auto& l : layers) {
    const double fan_in = static_cast<double>(l.in * l.k * l.k);
    const double sd = pass_through ? noise : std::sqrt(2.0 / fan_in);
    const ad::Tensor w = gaussian(rng, {l.out, l.in, l.k, l.k}, sd);
    if (pass_through) {
      std::vector<double> v(w.values().begin(), w.values().end());
      const std::size_t centre = (l.k / 2) * l.k + l.k / 2;
      v[centre] = 1.0;  // output 0 <- input 0, kernel centre
      p[prefix + ".w" + l.name] = ad::Tensor(w.shape(), std::move(v));
    } else {
      p[prefix + ".w" + l.name] = w;
    }
    p[prefix + ".b" + l.name] = ad::Tensor({l.out});
  }
}

void init_coarse(ParamSet& p, const std::string& prefix, std::size_t dim, const CoarseDims& dims,
                 Rng& rng, const std::vector<float>& cluster_sample) {
  if (dims.heads == 0 || dim % dims.heads != 0) {
    throw ConfigError("coarse: dim " + std::to_string(dim) + " not divisible by heads " +
                      std::to_string(dims.heads));
  }
  init_h_attention(p, prefix + ".att", dim, rng);
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  const std::string tf = prefix + ".tf";
  // Residual branches (output projection, second feed-forward layer) start
  // small so the untrained encoder is close to the identity.
  constexpr double kResidualScale = 0.1;
  for (const char* m : {"q", "k", "v", "o"}) {
    p[tf + ".W" + m] = gaussian(rng, {dim, dim}, std::string(m) == "o" ? kResidualScale * s : s);
    p[tf + ".b" + m] = ad::Tensor({dim});
  }
  p[tf + ".heads"] = ad::Tensor::scalar(static_cast<double>(dims.heads));
  p[tf + ".ln1.g"] = ad::Tensor::filled({dim}, 1.0);
  p[tf + ".ln1.b"] = ad::Tensor({dim});
  p[tf + ".ff1.W"] = gaussian(rng, {dim, dims.feed_forward}, std::sqrt(2.0) * s);
  p[tf + ".ff1.b"] = ad::Tensor({dims.feed_forward});
  p[tf + ".ff2.W"] =
      gaussian(rng, {dims.feed_forward, dim},
               kResidualScale / std::sqrt(static_cast<double>(dims.feed_forward)));
  p[tf + ".ff2.b"] = ad::Tensor({dim});
  p[tf + ".ln2.g"] = ad::Tensor::filled({dim}, 1.0);
  p[tf + ".ln2.b"] = ad::Tensor({dim});

  // Small assignment weights keep the soft assignment close to uniform.
  const std::string vlad = prefix + ".vlad";
  p[vlad + ".W"] = gaussian(rng, {dim, dims.clusters}, 0.1 * s);
  p[vlad + ".b"] = ad::Tensor({dims.clusters});
  std::vector<double> centres(dims.clusters * dim);
  const std::size_t sample_count = cluster_sample.size() / dim;
  for (std::size_t k = 0; k < dims.clusters; ++k) {
    if (sample_count > 0) {
      const std::size_t pick = rng.below(sample_count);
      for (std::size_t d = 0; d < dim; ++d) centres[k * dim + d] = cluster_sample[pick * dim + d];
    } else {
      const ad::Tensor u = unit_vector(rng, dim);
      for (std::size_t d = 0; d < dim; ++d) centres[k * dim + d] = u[d];
    }
  }
  p[vlad + ".C"] = ad::Tensor({dims.clusters, dim}, std::move(centres));

  const std::size_t vlad_dim = dims.clusters * dim;
  p[prefix + ".fc.W"] = gaussian(rng, {vlad_dim, dims.out}, 1.0 / std::sqrt(static_cast<double>(vlad_dim)));
  p[prefix + ".fc.b"] = ad::Tensor({dims.out});
  p[prefix + ".ln.g"] = ad::Tensor::filled({dims.out}, 1.0);
  p[prefix + ".ln.b"] = ad::Tensor({dims.out});
}

void init_selector(ParamSet& p, const std::string& prefix, std::size_t dim, std::size_t hidden,
                   Rng& rng) {
  init_h_attention(p, prefix + ".att", dim, rng);
  init_comparator(p, prefix + ".vc", rng, false);
  p[prefix + ".fc1.W"] = gaussian(rng, {3, hidden}, std::sqrt(2.0 / 3.0));
  p[prefix + ".fc1.b"] = ad::Tensor({hidden});
  p[prefix + ".bn.g"] = ad::Tensor::filled({hidden}, 1.0);
  p[prefix + ".bn.b"] = ad::Tensor({hidden});
  p[prefix + ".bn.running_mean"] = ad::Tensor({hidden});
  p[prefix + ".bn.running_var"] = ad::Tensor::filled({hidden}, 1.0);
  p[prefix + ".fc2.W"] = gaussian(rng, {hidden, 1}, std::sqrt(1.0 / static_cast<double>(hidden)));
  p[prefix + ".fc2.b"] = ad::Tensor({1});
}

}  // namespace dns::models
