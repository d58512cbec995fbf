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

#include <fstream>
#include <set>
#include <sstream>

#include "dns/byte_io.hpp"
#include "dns/error.hpp"
#include "dns/feature_store.hpp"

namespace dns {
namespace {

constexpr std::string_view kIndexMagic{"DNSIDX1\0", 8};
constexpr std::uint8_t kFloatKind = 0;
constexpr std::uint8_t kBinaryKind = 1;

void put_record(ByteWriter& w, const VideoIndexRecord& rec) {
  w.put_short_string(rec.video_id);
  if (const auto* f = std::get_if<RegionFeatureTensor>(&rec.fine)) {
    w.put<std::uint8_t>(kFloatKind);
    w.put<std::uint32_t>(f->frames());
    w.put<std::uint32_t>(f->regions());
    w.put<std::uint32_t>(f->dim());
    w.put_array(f->values());
  } else {
    const auto& b = std::get<BinaryCodeTensor>(rec.fine);
    w.put<std::uint8_t>(kBinaryKind);
    w.put<std::uint32_t>(b.frames());
    w.put<std::uint32_t>(b.regions());
    w.put<std::uint32_t>(b.bits());
    w.put_array(b.words());
  }
  w.put<std::uint32_t>(static_cast<std::uint32_t>(rec.coarse.size()));
  w.put_array(std::span<const float>(rec.coarse));
  w.put<float>(rec.self_sim);
}

VideoIndexRecord get_record(ByteReader& r) {
  VideoIndexRecord rec;
  rec.video_id = r.get_short_string();
  const auto kind = r.get<std::uint8_t>();
  const auto n = r.get<std::uint32_t>();
  const auto regions = r.get<std::uint32_t>();
  const auto width = r.get<std::uint32_t>();
  if (kind == kFloatKind) {
    const std::size_t count = std::size_t{n} * regions * width;
    if (count * sizeof(float) > r.remaining()) throw FormatError("truncated file");
    std::vector<float> values(count);
    r.get_array(std::span<float>(values));
    rec.fine = RegionFeatureTensor(rec.video_id, n, regions, width, std::move(values));
  } else if (kind == kBinaryKind) {
    const std::size_t count = std::size_t{n} * regions * ((std::size_t{width} + 63) / 64);
    if (count * 8 > r.remaining()) throw FormatError("truncated file");
    std::vector<std::uint64_t> words(count);
    r.get_array(std::span<std::uint64_t>(words));
    rec.fine = BinaryCodeTensor(rec.video_id, n, regions, width, std::move(words));
  } else {
    throw FormatError("index record '" + rec.video_id + "': unknown fine kind " +
                      std::to_string(kind));
  }
  const auto coarse_dim = r.get<std::uint32_t>();
  if (std::size_t{coarse_dim} * sizeof(float) > r.remaining()) throw FormatError("truncated file");
  rec.coarse.resize(coarse_dim);
  r.get_array(std::span<float>(rec.coarse));
  rec.self_sim = r.get<float>();
  return rec;
}

}  // namespace

std::string serialize_index(std::span<const VideoIndexRecord> records) {
  std::set<std::string_view> ids;
  for (const auto& rec : records) {
    if (!ids.insert(rec.video_id).second) {
      throw FormatError("duplicate id '" + rec.video_id + "'");
    }
  }
  ByteWriter w;
  w.put_bytes(kIndexMagic);
  w.put<std::uint32_t>(kIndexVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(records.size()));
  for (const auto& rec : records) put_record(w, rec);
  return w.take();
}

std::vector<VideoIndexRecord> deserialize_index(std::string_view bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kIndexMagic.size() || bytes.substr(0, kIndexMagic.size()) != kIndexMagic) {
    throw FormatError("bad magic");
  }
  r.get_bytes(kIndexMagic.size());
  const auto version = r.get<std::uint32_t>();
  if (version != kIndexVersion) {
    throw FormatError("unsupported index version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  std::vector<VideoIndexRecord> records;
  std::set<std::string> ids;
  for (std::uint32_t i = 0; i < count; ++i) {
    records.push_back(get_record(r));
    if (!ids.insert(records.back().video_id).second) {
      throw FormatError("duplicate id '" + records.back().video_id + "'");
    }
  }
  if (!r.done()) throw FormatError("trailing bytes after last record");
  return records;
}

void write_index(std::span<const VideoIndexRecord> records, const std::filesystem::path& path) {
  write_file_bytes(path, serialize_index(records));
}

std::vector<VideoIndexRecord> read_index(const std::filesystem::path& path) {
  return deserialize_index(read_file_bytes(path));
}

std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace dns
