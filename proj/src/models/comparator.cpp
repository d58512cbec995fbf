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

#include "dns/models.hpp"

namespace dns::models {

namespace {

ad::Var matrix_constant(ad::Graph& g, const SimilarityMatrix& m) {
  return g.constant(ad::Tensor({m.rows, m.cols}, std::vector<double>(m.values.begin(), m.values.end())));
}

}  // namespace

SimilarityMatrix comparator_apply(const ParamSet& params, const std::string& prefix,
                                  const SimilarityMatrix& m) {
  ad::Graph g;
  Binder b(g, params, false);
  g.mark_output("mv", comparator(b, prefix, matrix_constant(g, m)));
  const auto out = g.forward().at("mv");
  std::vector<float> values(out.values().begin(), out.values().end());
  return SimilarityMatrix(static_cast<std::uint32_t>(out.dim(0)), static_cast<std::uint32_t>(out.dim(1)),
                          std::move(values));
}

double comparator_score(const ParamSet& params, const std::string& prefix, const SimilarityMatrix& m) {
  ad::Graph g;
  Binder b(g, params, false);
  g.mark_output("s", video_to_video(g, comparator(b, prefix, matrix_constant(g, m))));
  return g.forward().at("s").item();
}

}  // namespace dns::models
