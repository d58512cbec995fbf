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

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dns/feature_store.hpp"
#include "dns/graph.hpp"
#include "dns/random.hpp"
#include "dns/similarity.hpp"

namespace dns::models {

// Named parameter tensors. Ordered so iteration, checkpoints and optimizer
// updates are deterministic.
using ParamSet = std::map<std::string, ad::Tensor>;

inline constexpr double kBinarizationSigma = 1e-3;

// Parameters that are configuration or running statistics rather than
// weights (".heads", ".sigma", ".running_mean", ".running_var").
bool is_trainable(const std::string& name);

// Rounds every value to float32, matching what a checkpoint round-trip keeps.
void round_to_float(ParamSet& params);

// Keeps only the entries whose names start with `prefix` followed by '.'.
ParamSet subset(const ParamSet& params, const std::string& prefix);
void merge_into(ParamSet& dst, const ParamSet& src);

const ad::Tensor& require(const ParamSet& params, const std::string& name);

// Binds parameters as leaves of a graph, each at most once.
class Binder {
 public:
  Binder(ad::Graph& graph, const ParamSet& params, bool trainable)
      : graph_(graph), params_(params), trainable_(trainable) {}
  ad::Var operator()(const std::string& name);
  ad::Graph& graph() { return graph_; }
  const ParamSet& params() const { return params_; }

 private:
  ad::Graph& graph_;
  const ParamSet& params_;
  bool trainable_;
  std::map<std::string, ad::Var> bound_;
};

// Checkpoint file (little-endian): "DNSCKPT1", u32 tensor count, then per
// tensor u16 name length, name bytes, u8 rank, u32 dims[rank], f32 payload.
std::string serialize_checkpoint(const ParamSet& params);
ParamSet deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const ParamSet& params, const std::filesystem::path& path);
ParamSet load_checkpoint(const std::filesystem::path& path);

// ---- graph building blocks ------------------------------------------------

// [N, R, D] constant holding the video.
ad::Var video_constant(ad::Graph& g, const RegionFeatureTensor& x);

// Region weight (<u, r> + 1) / 2 with u l2-normalized inside the graph.
ad::Var l2_attention(Binder& b, const std::string& prefix, ad::Var x);
ad::Var l2_attention_weights(Binder& b, const std::string& prefix, ad::Var x);
// Region weight sig(<u, tanh(r W + b)>).
ad::Var h_attention(Binder& b, const std::string& prefix, ad::Var x);
ad::Var h_attention_weights(Binder& b, const std::string& prefix, ad::Var x);
// erf(r W / sqrt(2 sigma^2)); values in (-1, 1).
ad::Var binarize_train(Binder& b, const std::string& prefix, ad::Var x,
                       double sigma = kBinarizationSigma);

// [Nq,Rq,D] x [Np,Rp,D] -> [Nq,Np] Chamfer frame-to-frame similarity.
ad::Var frame_to_frame(ad::Graph& g, ad::Var q, ad::Var p);
// Same Chamfer over code tensors with region similarity <q,p>/L.
ad::Var hamming_frame_to_frame(ad::Graph& g, ad::Var q, ad::Var p);
// [N,R,D] -> [N,N] mean-of-Gram self-similarity.
ad::Var self_similarity(ad::Graph& g, ad::Var x);
// [N',N'] -> scalar: mean_i max_j Htanh.
ad::Var video_to_video(ad::Graph& g, ad::Var mv);

// Video Comparator: [Nq,Np] -> [ceil(Nq'/4), ceil(Np'/4)] where N' = max(N,4)
// after symmetric padding.
ad::Var comparator(Binder& b, const std::string& prefix, ad::Var m);
std::uint32_t comparator_output_size(std::uint32_t n);
// Symmetric ("reflect including edge") frame indices padding n up to 4.
std::vector<std::size_t> symmetric_pad_indices(std::size_t n, std::size_t target = 4);

struct CoarseOptions {
  bool bypass_attention = false;
  bool bypass_transformer = false;
};

// h-attention -> region mean -> sinusoidal positions + one post-norm
// encoder layer -> NetVLAD -> FC + LayerNorm -> l2-normalize.
ad::Var coarse_embed(Binder& b, const std::string& prefix, ad::Var x,
                     const CoarseOptions& options = {});
ad::Var transformer_layer(Binder& b, const std::string& prefix, ad::Var frames,
                          std::size_t heads);
ad::Var netvlad(Binder& b, const std::string& prefix, ad::Var frames);
ad::Tensor sinusoidal_positions(std::size_t frames, std::size_t dim);

// [B,3] -> [B] logits. Training mode uses batch statistics and a dropout
// mask drawn from `dropout_rng`; inference uses the running statistics.
ad::Var selector_logits(Binder& b, const std::string& prefix, ad::Var z, bool training,
                        Rng* dropout_rng = nullptr,
                        std::shared_ptr<ad::BatchStats> stats = nullptr);

// ---- parameter initialization --------------------------------------------

struct CoarseDims {
  std::size_t heads = 8;
  std::size_t feed_forward = 2048;
  std::size_t clusters = 64;
  std::size_t out = 1024;
};

void init_l2_attention(ParamSet& p, const std::string& prefix, std::size_t dim, Rng& rng);
void init_h_attention(ParamSet& p, const std::string& prefix, std::size_t dim, Rng& rng);
void init_binarization(ParamSet& p, const std::string& prefix, std::size_t dim,
                       std::size_t bits, Rng& rng);
// He-initialized comparator, or the pass-through configuration in which
// channel 0 carries the input unchanged through every layer.
void init_comparator(ParamSet& p, const std::string& prefix, Rng& rng, bool pass_through,
                     double noise = 0.0);
// `cluster_sample` holds frame vectors ([count x dim]) to seed the NetVLAD
// centers; random unit vectors are used when it is empty.
void init_coarse(ParamSet& p, const std::string& prefix, std::size_t dim,
                 const CoarseDims& dims, Rng& rng,
                 const std::vector<float>& cluster_sample = {});
void init_selector(ParamSet& p, const std::string& prefix, std::size_t dim,
                   std::size_t hidden, Rng& rng);

// ---- assembled networks ----------------------------------------------------

enum class StudentKind { kAttention, kBinary, kCoarse };

const char* student_prefix(StudentKind kind);
std::string student_name(StudentKind kind);
StudentKind parse_student(const std::string& name);

// Parameter sets for complete networks, all prefixed ("teacher.", "attn.",
// "bin.", "coarse.", "selector.").
ParamSet make_teacher(std::size_t dim, Rng& rng, double vc_noise = 1e-2);
ParamSet make_attention_student(std::size_t dim, Rng& rng);
ParamSet make_binary_student(std::size_t dim, std::size_t bits, Rng& rng);
ParamSet make_coarse_student(std::size_t dim, const CoarseDims& dims, Rng& rng,
                             const std::vector<float>& cluster_sample = {});
ParamSet make_selector(std::size_t dim, Rng& rng, std::size_t hidden = 100);

// Pair scores as graph nodes (for training).
ad::Var teacher_pair(Binder& b, ad::Var q, ad::Var p);
// Fine student pair score; `mv_out` receives the comparator output.
ad::Var fine_student_pair(Binder& b, StudentKind kind, ad::Var q, ad::Var p,
                          ad::Var* mv_out = nullptr);
ad::Var coarse_pair(Binder& b, ad::Var q, ad::Var p, const CoarseOptions& options = {});
ad::Var self_similarity_feature(Binder& b, ad::Var x);

// Straight evaluation helpers (no gradients).
double teacher_similarity(const ParamSet& params, const RegionFeatureTensor& q,
                          const RegionFeatureTensor& p);
// Index-time fine representation: attention-weighted tensor or packed codes.
FineRepresentation extract_fine(const ParamSet& params, StudentKind kind,
                                const RegionFeatureTensor& x);
// Retrieval-time fine score from stored representations.
double fine_similarity(const ParamSet& params, StudentKind kind, const FineRepresentation& q,
                       const FineRepresentation& p);
std::vector<float> coarse_vector(const ParamSet& params, const RegionFeatureTensor& x,
                                 const CoarseOptions& options = {});
float self_similarity_value(const ParamSet& params, const RegionFeatureTensor& x);
double selector_confidence(const ParamSet& params, const std::array<double, 3>& z);
std::vector<double> selector_confidences(const ParamSet& params,
                                         const std::vector<std::array<double, 3>>& z);

// Applies a comparator to a float matrix and reduces with video_to_video.
double comparator_score(const ParamSet& params, const std::string& prefix,
                        const SimilarityMatrix& m);
SimilarityMatrix comparator_apply(const ParamSet& params, const std::string& prefix,
                                  const SimilarityMatrix& m);

}  // namespace dns::models
