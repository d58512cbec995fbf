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

namespace {
constexpr double kBatchNormEps = 1e-5;
constexpr double kDropout = 0.5;
}  // namespace

Var selector_logits(Binder& b, const std::string& prefix, Var z, bool training, Rng* dropout_rng,
                    std::shared_ptr<ad::BatchStats> stats) {
  auto& g = b.graph();
  const auto zs = g.shape(z);
  if (zs.size() != 2 || zs[1] != 3) {
    throw ShapeError("selector expects [batch, 3] inputs, got " + ad::shape_string(zs));
  }
  Var h = g.add(g.matmul(z, b(prefix + ".fc1.W")), b(prefix + ".fc1.b"));
  if (training) {
    h = g.batch_norm(h, kBatchNormEps, std::move(stats));
  } else {
    const Var denom = g.sqrt(g.add_scalar(b(prefix + ".bn.running_var"), kBatchNormEps));
    h = g.div(g.sub(h, b(prefix + ".bn.running_mean")), denom);
  }
  h = g.relu(g.add(g.mul(h, b(prefix + ".bn.g")), b(prefix + ".bn.b")));
  if (training && dropout_rng != nullptr) {
    const auto hs = g.shape(h);
    std::vector<double> mask(ad::element_count(hs));
    for (auto& m : mask) m = dropout_rng->bernoulli(kDropout) ? 0.0 : 1.0 / (1.0 - kDropout);
    h = g.mul(h, g.constant(ad::Tensor(hs, std::move(mask))));
  }
  const Var out = g.add(g.matmul(h, b(prefix + ".fc2.W")), b(prefix + ".fc2.b"));
  return g.reshape(out, {zs[0]});
}

std::vector<double> selector_confidences(const ParamSet& params,
                                         const std::vector<std::array<double, 3>>& z) {
  if (z.empty()) return {};
  if (!params.count("selector.fc1.W")) throw Error("selector: checkpoint not loaded");
  ad::Graph g;
  Binder b(g, params, false);
  std::vector<double> flat;
  flat.reserve(z.size() * 3);
  for (const auto& row : z) {
    for (double v : row) {
      if (!std::isfinite(v)) throw Error("selector: non-finite input feature");
      flat.push_back(v);
    }
  }
  const Var input = g.constant(ad::Tensor({z.size(), 3}, std::move(flat)));
  g.mark_output("p", g.sigmoid(selector_logits(b, "selector", input, false)));
  const auto out = g.forward().at("p");
  return std::vector<double>(out.values().begin(), out.values().end());
}

double selector_confidence(const ParamSet& params, const std::array<double, 3>& z) {
  return selector_confidences(params, {z}).front();
}

}  // namespace dns::models
