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

#include <string>
#include <string_view>
#include <vector>

namespace dns::csv {

// Comma-separated rows without quoting; fields must not contain commas or
// newlines. The first row must equal `header`.
std::vector<std::vector<std::string>> parse(std::string_view text,
                                            const std::vector<std::string>& header);
std::string join(const std::vector<std::string>& fields);
// Shortest decimal form that reads back to the same double.
std::string number(double v);

}  // namespace dns::csv
