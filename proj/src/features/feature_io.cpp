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

#include "dns/byte_io.hpp"
#include "dns/error.hpp"
#include "dns/feature_store.hpp"

namespace dns {
namespace {
constexpr std::string_view kFeatureMagic{"DNSFEAT1", 8};
constexpr std::uint32_t kFeatureVersion = 1;
}  // namespace

std::string serialize_features(const RegionFeatureTensor& tensor) {
  ByteWriter w;
  w.put_bytes(kFeatureMagic);
  w.put<std::uint32_t>(kFeatureVersion);
  w.put_short_string(tensor.video_id());
  w.put<std::uint32_t>(tensor.frames());
  w.put<std::uint32_t>(tensor.regions());
  w.put<std::uint32_t>(tensor.dim());
  w.put_array(tensor.values());
  return w.take();
}

RegionFeatureTensor deserialize_features(std::string_view bytes) {
  if (bytes.size() < kFeatureMagic.size() || bytes.substr(0, kFeatureMagic.size()) != kFeatureMagic) {
    throw FormatError("bad magic");
  }
  ByteReader r(bytes);
  r.get_bytes(kFeatureMagic.size());
  const auto version = r.get<std::uint32_t>();
  if (version != kFeatureVersion) {
    throw FormatError("unsupported feature file version " + std::to_string(version));
  }
  std::string id = r.get_short_string();
  const auto n = r.get<std::uint32_t>();
  const auto regions = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint32_t>();
  const std::size_t count = std::size_t{n} * regions * dim;
  if (count * sizeof(float) != r.remaining()) throw FormatError("truncated file");
  std::vector<float> values(count);
  r.get_array(std::span<float>(values));
  return RegionFeatureTensor(std::move(id), n, regions, dim, std::move(values));
}

void write_features(const RegionFeatureTensor& tensor, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_features(tensor));
}

RegionFeatureTensor read_features(const std::filesystem::path& path) {
  return deserialize_features(read_file_bytes(path));
}

std::vector<RegionFeatureTensor> read_feature_dir(const std::filesystem::path& dir) {
  std::vector<RegionFeatureTensor> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".dnsfeat") {
      out.push_back(read_features(entry.path()));
    }
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.video_id() < b.video_id(); });
  return out;
}

}  // namespace dns
