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

#include <charconv>
#include <sstream>

#include "dns/error.hpp"
#include "dns/feature_store.hpp"
#include "dns/training.hpp"

namespace dns::training {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    cfg.values_[key] = trim(std::string_view(body).substr(eq + 1));
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  return parse(read_file_bytes(path));
}

std::string KeyValueConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string KeyValueConfig::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: missing required key '" + key + "'");
  return it->second;
}

double KeyValueConfig::number(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + it->second + "'");
  }
}

std::uint64_t KeyValueConfig::integer(const std::string& key, std::uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::uint64_t v = 0;
  const auto& s = it->second;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("config: key '" + key + "' expects a non-negative integer, got '" + s + "'");
  }
  return v;
}

TrainConfig TrainConfig::from(const KeyValueConfig& kv) {
  TrainConfig c;
  c.seed = kv.integer("seed", c.seed);
  c.epochs = kv.integer("epochs", c.epochs);
  c.batch = kv.integer("batch", c.batch);
  c.lr = kv.number("lr", c.lr);
  c.t = kv.number("t", c.t);
  c.gamma = kv.number("gamma", c.gamma);
  c.sigma = kv.number("sigma", c.sigma);
  c.k_negatives = kv.integer("k_negatives", c.k_negatives);
  c.cluster_threshold = kv.number("cluster_threshold", c.cluster_threshold);
  c.augment_p = kv.number("augment_p", c.augment_p);
  c.frame_drop_p = kv.number("frame_drop_p", c.frame_drop_p);
  c.simreg_weight = kv.number("simreg_weight", c.simreg_weight);
  c.bits = kv.integer("bits", c.bits);
  c.coarse.heads = kv.integer("coarse_heads", c.coarse.heads);
  c.coarse.feed_forward = kv.integer("coarse_feed_forward", c.coarse.feed_forward);
  c.coarse.clusters = kv.integer("coarse_clusters", c.coarse.clusters);
  c.coarse.out = kv.integer("coarse_out", c.coarse.out);
  c.selector_pairs_per_class = kv.integer("selector_pairs_per_class", c.selector_pairs_per_class);
  c.selector_hidden = kv.integer("selector_hidden", c.selector_hidden);
  c.validate();
  return c;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("config: " + msg); };
  if (batch == 0) fail("batch must be positive");
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(t >= 0.0)) fail("t must be non-negative");
  if (!(sigma > 0.0)) fail("sigma must be positive");
  if (!(cluster_threshold >= -1.0 && cluster_threshold <= 1.0)) fail("cluster_threshold must lie in [-1, 1]");
  if (!(augment_p >= 0.0 && augment_p <= 1.0)) fail("augment_p must lie in [0, 1]");
  if (!(frame_drop_p >= 0.0 && frame_drop_p < 1.0)) fail("frame_drop_p must lie in [0, 1)");
  if (bits == 0) fail("bits must be positive");
  if (coarse.heads == 0 || coarse.clusters == 0 || coarse.out == 0 || coarse.feed_forward == 0) {
    fail("coarse dimensions must be positive");
  }
  if (selector_hidden == 0) fail("selector_hidden must be positive");
}

}  // namespace dns::training
