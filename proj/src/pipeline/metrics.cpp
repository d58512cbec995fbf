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

#include "dns/error.hpp"
#include "dns/pipeline.hpp"

namespace dns {

double average_precision(const std::vector<std::string>& ranking, const std::set<std::string>& relevant) {
  if (relevant.empty()) throw Error("average_precision: empty relevant set");
  double sum = 0.0;
  std::size_t found = 0;
  for (std::size_t r = 0; r < ranking.size(); ++r) {
    if (relevant.count(ranking[r])) {
      ++found;
      sum += static_cast<double>(found) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(relevant.size());
}

double mean_average_precision(const std::vector<double>& aps) {
  if (aps.empty()) return 0.0;
  double sum = 0.0;
  for (double a : aps) sum += a;
  return sum / static_cast<double>(aps.size());
}

}  // namespace dns
