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

#include <algorithm>
#include <cmath>

#include "dns/training.hpp"

namespace dns::training {

double triplet_loss(double sim_pos, double sim_neg, double gamma) {
  return std::max(0.0, sim_neg - sim_pos + gamma);
}

double similarity_regularization(std::span<const double> mv) {
  double total = 0.0;
  for (double v : mv) total += std::max(0.0, std::abs(v) - 1.0);
  return total;
}

double similarity_regularization(const SimilarityMatrix& mv) {
  double total = 0.0;
  for (float v : mv.values) total += std::max(0.0, std::abs(static_cast<double>(v)) - 1.0);
  return total;
}

double distill_loss(double student, double teacher) { return std::abs(teacher - student); }

int selector_label(double coarse_sim, double fine_sim, double t) {
  return std::abs(coarse_sim - fine_sim) > t ? 1 : 0;
}

ad::Var triplet_loss(ad::Graph& g, ad::Var sim_pos, ad::Var sim_neg, double gamma) {
  return g.relu(g.add_scalar(g.sub(sim_neg, sim_pos), gamma));
}

ad::Var similarity_regularization(ad::Graph& g, ad::Var mv) {
  return g.sum_all(g.relu(g.add_scalar(g.abs(mv), -1.0)));
}

ad::Var distill_loss(ad::Graph& g, ad::Var student, double teacher) {
  return g.abs(g.add_scalar(student, -teacher));
}

}  // namespace dns::training
