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
#include "dns/training.hpp"

namespace dns::training {

void Adam::step(models::ParamSet& params, const std::map<std::string, ad::Tensor>& grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, grad] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw Error("adam: gradient for unknown parameter " + name);
    if (grad.size() != it->second.size()) throw ShapeError("adam: gradient shape mismatch for " + name);
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) {
      m.assign(grad.size(), 0.0);
      v.assign(grad.size(), 0.0);
    }
    std::vector<double> w(it->second.values().begin(), it->second.values().end());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
    it->second = ad::Tensor(it->second.shape(), std::move(w));
  }
}

}  // namespace dns::training
