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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace dns {

// N x R x D region-level video tensor, float32 row-major.
class RegionFeatureTensor {
 public:
  RegionFeatureTensor() = default;
  RegionFeatureTensor(std::string video_id, std::uint32_t frames,
                      std::uint32_t regions, std::uint32_t dim,
                      std::vector<float> values);

  const std::string& video_id() const noexcept { return video_id_; }
  std::uint32_t frames() const noexcept { return frames_; }
  std::uint32_t regions() const noexcept { return regions_; }
  std::uint32_t dim() const noexcept { return dim_; }
  std::span<const float> values() const noexcept { return values_; }
  std::span<const float> region(std::size_t frame, std::size_t region) const;
  const float* frame_data(std::size_t frame) const {
    return values_.data() + frame * regions_ * dim_;
  }
  std::size_t payload_bytes() const noexcept { return values_.size() * sizeof(float); }

  void set_video_id(std::string id) { video_id_ = std::move(id); }

  friend bool operator==(const RegionFeatureTensor&, const RegionFeatureTensor&) = default;

 private:
  std::string video_id_;
  std::uint32_t frames_ = 0;
  std::uint32_t regions_ = 0;
  std::uint32_t dim_ = 0;
  std::vector<float> values_;
};

// N x R x L tensor of +-1 codes packed one bit per entry (+1 -> 1), each
// region vector padded to whole 64-bit words with zero padding bits.
class BinaryCodeTensor {
 public:
  BinaryCodeTensor() = default;
  BinaryCodeTensor(std::string video_id, std::uint32_t frames,
                   std::uint32_t regions, std::uint32_t bits,
                   std::vector<std::uint64_t> words);

  const std::string& video_id() const noexcept { return video_id_; }
  std::uint32_t frames() const noexcept { return frames_; }
  std::uint32_t regions() const noexcept { return regions_; }
  std::uint32_t bits() const noexcept { return bits_; }
  std::size_t words_per_region() const noexcept { return (bits_ + 63) / 64; }
  std::span<const std::uint64_t> words() const noexcept { return words_; }
  std::span<const std::uint64_t> region_words(std::size_t frame,
                                              std::size_t region) const;
  int code(std::size_t frame, std::size_t region, std::size_t bit) const;
  std::size_t payload_bytes() const noexcept { return words_.size() * 8; }

  void set_video_id(std::string id) { video_id_ = std::move(id); }

  friend bool operator==(const BinaryCodeTensor&, const BinaryCodeTensor&) = default;

 private:
  std::string video_id_;
  std::uint32_t frames_ = 0;
  std::uint32_t regions_ = 0;
  std::uint32_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

using FineRepresentation = std::variant<RegionFeatureTensor, BinaryCodeTensor>;

// The three per-video representations kept in an index.
struct VideoIndexRecord {
  std::string video_id;
  FineRepresentation fine;
  std::vector<float> coarse;
  float self_sim = 0.0f;

  bool is_binary() const noexcept {
    return std::holds_alternative<BinaryCodeTensor>(fine);
  }
  friend bool operator==(const VideoIndexRecord&, const VideoIndexRecord&) = default;
};

// Packs an N x R x L tensor of +-1 entries (row-major). Throws on any other
// value, naming its coordinates.
BinaryCodeTensor pack_codes(std::string video_id, std::uint32_t frames,
                            std::uint32_t regions, std::uint32_t bits,
                            std::span<const std::int8_t> codes);
std::vector<std::int8_t> unpack_codes(const BinaryCodeTensor& codes);

// PCA whitening: y = (x - mean) * projection, projection is in_dim x out_dim.
struct WhiteningTransform {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<double> mean;
  std::vector<double> projection;  // row-major in_dim x out_dim

  std::vector<double> apply(std::span<const float> vector) const;
};

// Fits on `count` row vectors of length `dim` stored contiguously.
WhiteningTransform fit_whitening(std::span<const float> sample, std::size_t dim,
                                 std::size_t out_dim);

// Whitens then l2-normalizes every region vector.
RegionFeatureTensor whiten(const RegionFeatureTensor& tensor,
                           const WhiteningTransform& transform);

// l2-normalizes every region vector in place.
void normalize_regions(std::vector<float>& values, std::size_t dim);

// Index file (little-endian):
//   "DNSIDX1\0", u32 version = 1, u32 record count, then per record
//   u16 id length, id bytes, u8 fine kind (0 float32, 1 binary),
//   u32 N, u32 R, u32 D-or-L, payload, u32 coarse dim, f32 coarse[dim],
//   f32 self_sim.
inline constexpr std::uint32_t kIndexVersion = 1;

std::string serialize_index(std::span<const VideoIndexRecord> records);
std::vector<VideoIndexRecord> deserialize_index(std::string_view bytes);
void write_index(std::span<const VideoIndexRecord> records,
                 const std::filesystem::path& path);
std::vector<VideoIndexRecord> read_index(const std::filesystem::path& path);

// Feature file: "DNSFEAT1", u32 version = 1, u16 id length, id bytes,
// u32 N, u32 R, u32 D, f32 payload.
std::string serialize_features(const RegionFeatureTensor& tensor);
RegionFeatureTensor deserialize_features(std::string_view bytes);
void write_features(const RegionFeatureTensor& tensor,
                    const std::filesystem::path& path);
RegionFeatureTensor read_features(const std::filesystem::path& path);
// Loads every *.dnsfeat file in a directory, sorted by video id.
std::vector<RegionFeatureTensor> read_feature_dir(const std::filesystem::path& dir);

std::string read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace dns
