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

#include "dns/byte_io.hpp"
#include "dns/error.hpp"
#include "dns/models.hpp"

namespace dns::models {
namespace {
constexpr std::string_view kCheckpointMagic{"DNSCKPT1", 8};
}  // namespace

std::string serialize_checkpoint(const ParamSet& params) {
  ByteWriter w;
  w.put_bytes(kCheckpointMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    w.put_short_string(name);
    if (t.rank() > 255) throw FormatError("checkpoint: tensor '" + name + "' rank too large");
    w.put<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : t.values()) w.put<float>(static_cast<float>(v));
  }
  return w.take();
}

ParamSet deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() ||
      bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw FormatError("bad magic");
  }
  ByteReader r(bytes);
  r.get_bytes(kCheckpointMagic.size());
  const auto count = r.get<std::uint32_t>();
  ParamSet params;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.get_short_string();
    const auto rank = r.get<std::uint8_t>();
    ad::Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>();
    const std::size_t n = ad::element_count(shape);
    if (n * sizeof(float) > r.remaining()) throw FormatError("truncated file");
    std::vector<float> raw(n);
    r.get_array(std::span<float>(raw));
    if (params.count(name)) throw FormatError("checkpoint: duplicate tensor '" + name + "'");
    params.emplace(std::move(name), ad::Tensor(std::move(shape), std::vector<double>(raw.begin(), raw.end())));
  }
  if (!r.done()) throw FormatError("trailing bytes after last tensor");
  return params;
}

void save_checkpoint(const ParamSet& params, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_checkpoint(params));
}

ParamSet load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file_bytes(path));
}

}  // namespace dns::models
