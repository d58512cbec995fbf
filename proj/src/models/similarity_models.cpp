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
#include "dns/models.hpp"

namespace dns::models {

using ad::Var;

namespace {

double binarization_sigma(const ParamSet& params) {
  auto it = params.find("bin.hash.sigma");
  return it == params.end() ? kBinarizationSigma : it->second.item();
}

RegionFeatureTensor to_region_tensor(const std::string& id, const ad::Tensor& t) {
  std::vector<float> values(t.values().begin(), t.values().end());
  return RegionFeatureTensor(id, static_cast<std::uint32_t>(t.dim(0)), static_cast<std::uint32_t>(t.dim(1)),
                             static_cast<std::uint32_t>(t.dim(2)), std::move(values));
}

}  // namespace

const char* student_prefix(StudentKind kind) {
  switch (kind) {
    case StudentKind::kAttention: return "attn";
    case StudentKind::kBinary: return "bin";
    case StudentKind::kCoarse: return "coarse";
  }
  return "";
}

std::string student_name(StudentKind kind) { return student_prefix(kind); }

StudentKind parse_student(const std::string& name) {
  if (name == "attn") return StudentKind::kAttention;
  if (name == "bin") return StudentKind::kBinary;
  if (name == "coarse") return StudentKind::kCoarse;
  throw ConfigError("unknown student kind '" + name + "' (expected attn, bin or coarse)");
}

ParamSet make_teacher(std::size_t dim, Rng& rng, double vc_noise) {
  ParamSet p;
  init_l2_attention(p, "teacher.att", dim, rng);
  init_comparator(p, "teacher.vc", rng, true, vc_noise);
  return p;
}

ParamSet make_attention_student(std::size_t dim, Rng& rng) {
  ParamSet p;
  init_h_attention(p, "attn.att", dim, rng);
  init_comparator(p, "attn.vc", rng, false);
  return p;
}

ParamSet make_binary_student(std::size_t dim, std::size_t bits, Rng& rng) {
  ParamSet p;
  init_binarization(p, "bin.hash", dim, bits, rng);
  init_comparator(p, "bin.vc", rng, false);
  return p;
}

ParamSet make_coarse_student(std::size_t dim, const CoarseDims& dims, Rng& rng,
                             const std::vector<float>& cluster_sample) {
  ParamSet p;
  init_coarse(p, "coarse", dim, dims, rng, cluster_sample);
  return p;
}

ParamSet make_selector(std::size_t dim, Rng& rng, std::size_t hidden) {
  ParamSet p;
  init_selector(p, "selector", dim, hidden, rng);
  return p;
}

Var teacher_pair(Binder& b, Var q, Var p) {
  auto& g = b.graph();
  const Var m = frame_to_frame(g, l2_attention(b, "teacher.att", q), l2_attention(b, "teacher.att", p));
  return video_to_video(g, comparator(b, "teacher.vc", m));
}

Var fine_student_pair(Binder& b, StudentKind kind, Var q, Var p, Var* mv_out) {
  auto& g = b.graph();
  Var m;
  if (kind == StudentKind::kAttention) {
    m = frame_to_frame(g, h_attention(b, "attn.att", q), h_attention(b, "attn.att", p));
  } else if (kind == StudentKind::kBinary) {
    const double sigma = binarization_sigma(b.params());
    m = hamming_frame_to_frame(g, binarize_train(b, "bin.hash", q, sigma),
                               binarize_train(b, "bin.hash", p, sigma));
  } else {
    throw ConfigError("fine_student_pair: the coarse student is not fine-grained");
  }
  const Var mv = comparator(b, std::string(student_prefix(kind)) + ".vc", m);
  if (mv_out != nullptr) *mv_out = mv;
  return video_to_video(g, mv);
}

Var coarse_pair(Binder& b, Var q, Var p, const CoarseOptions& options) {
  auto& g = b.graph();
  return g.sum_all(g.mul(coarse_embed(b, "coarse", q, options), coarse_embed(b, "coarse", p, options)));
}

Var self_similarity_feature(Binder& b, Var x) {
  auto& g = b.graph();
  const Var m = self_similarity(g, h_attention(b, "selector.att", x));
  return g.mean_all(comparator(b, "selector.vc", m));
}

double teacher_similarity(const ParamSet& params, const RegionFeatureTensor& q,
                          const RegionFeatureTensor& p) {
  if (q.dim() != p.dim()) throw ShapeError("teacher_similarity: dimension mismatch");
  ad::Graph g;
  Binder b(g, params, false);
  g.mark_output("s", teacher_pair(b, video_constant(g, q), video_constant(g, p)));
  return g.forward().at("s").item();
}

FineRepresentation extract_fine(const ParamSet& params, StudentKind kind, const RegionFeatureTensor& x) {
  ad::Graph g;
  Binder b(g, params, false);
  const Var v = video_constant(g, x);
  if (kind == StudentKind::kAttention) {
    g.mark_output("x", h_attention(b, "attn.att", v));
    return to_region_tensor(x.video_id(), g.forward().at("x"));
  }
  if (kind == StudentKind::kBinary) {
    const Var w = b("bin.hash.W");
    const std::size_t bits = g.shape(w).at(1);
    g.mark_output("pre", g.matmul(g.reshape(v, {std::size_t{x.frames()} * x.regions(), x.dim()}), w));
    const auto pre = g.forward().at("pre");
    std::vector<std::int8_t> codes(pre.size());
    // A pre-activation of exactly zero maps to +1.
    for (std::size_t i = 0; i < pre.size(); ++i) codes[i] = pre[i] >= 0.0 ? 1 : -1;
    return pack_codes(x.video_id(), x.frames(), x.regions(), static_cast<std::uint32_t>(bits), codes);
  }
  // The coarse student has no fine representation; the raw tensor is kept.
  return x;
}

double fine_similarity(const ParamSet& params, StudentKind kind, const FineRepresentation& q,
                       const FineRepresentation& p) {
  if (kind == StudentKind::kBinary) {
    const auto* qb = std::get_if<BinaryCodeTensor>(&q);
    const auto* pb = std::get_if<BinaryCodeTensor>(&p);
    if (!qb || !pb) throw Error("fine_similarity: binary student needs packed codes");
    return comparator_score(params, "bin.vc", hamming_frame_to_frame(*qb, *pb));
  }
  const auto* qf = std::get_if<RegionFeatureTensor>(&q);
  const auto* pf = std::get_if<RegionFeatureTensor>(&p);
  if (!qf || !pf) throw Error("fine_similarity: float student needs float tensors");
  if (kind != StudentKind::kAttention) throw ConfigError("fine_similarity: not a fine-grained student");
  return comparator_score(params, "attn.vc", dns::frame_to_frame(*qf, *pf));
}

std::vector<float> coarse_vector(const ParamSet& params, const RegionFeatureTensor& x,
                                 const CoarseOptions& options) {
  ad::Graph g;
  Binder b(g, params, false);
  g.mark_output("v", coarse_embed(b, "coarse", video_constant(g, x), options));
  const auto out = g.forward().at("v");
  return std::vector<float>(out.values().begin(), out.values().end());
}

float self_similarity_value(const ParamSet& params, const RegionFeatureTensor& x) {
  ad::Graph g;
  Binder b(g, params, false);
  g.mark_output("s", self_similarity_feature(b, video_constant(g, x)));
  return static_cast<float>(g.forward().at("s").item());
}

}  // namespace dns::models
