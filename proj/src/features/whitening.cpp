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

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "dns/error.hpp"
#include "dns/feature_store.hpp"

namespace dns {
namespace {

constexpr double kEigenFloor = 1e-8;
// Eigenvalues below this fraction of the largest one count as exactly zero.
constexpr double kZeroEigenRatio = 1e-12;

}  // namespace

std::vector<double> WhiteningTransform::apply(std::span<const float> vector) const {
  if (vector.size() != in_dim) {
    throw ShapeError("whitening: expected dim " + std::to_string(in_dim) + ", got " +
                     std::to_string(vector.size()));
  }
  std::vector<double> out(out_dim, 0.0);
  for (std::size_t i = 0; i < in_dim; ++i) {
    const double centered = vector[i] - mean[i];
    const double* row = projection.data() + i * out_dim;
    for (std::size_t j = 0; j < out_dim; ++j) out[j] += centered * row[j];
  }
  return out;
}

WhiteningTransform fit_whitening(std::span<const float> sample, std::size_t dim,
                                 std::size_t out_dim) {
  if (dim == 0 || sample.size() % dim != 0) {
    throw ShapeError("fit_whitening: sample size is not a multiple of dim");
  }
  const std::size_t count = sample.size() / dim;
  if (out_dim == 0 || out_dim > dim) {
    throw ShapeError("fit_whitening: out_dim must be in [1, " + std::to_string(dim) + "]");
  }
  if (count < out_dim) {
    throw ShapeError("fit_whitening: need at least out_dim = " + std::to_string(out_dim) +
                     " sample vectors, got " + std::to_string(count));
  }
  Eigen::MatrixXd data(count, dim);
  for (std::size_t r = 0; r < count; ++r) {
    for (std::size_t c = 0; c < dim; ++c) data(r, c) = sample[r * dim + c];
  }
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(count);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw Error("fit_whitening: eigendecomposition failed");
  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd& vectors = solver.eigenvectors();
  const double largest = std::max(values(static_cast<Eigen::Index>(dim) - 1), 0.0);

  WhiteningTransform t;
  t.in_dim = dim;
  t.out_dim = out_dim;
  t.mean.assign(mean.data(), mean.data() + dim);
  t.projection.assign(dim * out_dim, 0.0);
  for (std::size_t k = 0; k < out_dim; ++k) {
    const auto col = static_cast<Eigen::Index>(dim - 1 - k);
    const double lambda = values(col);
    if (largest <= 0.0 || lambda <= largest * kZeroEigenRatio) {
      throw Error("fit_whitening: rank-deficient covariance, eigenvalue " + std::to_string(k) +
                  " (descending order) is zero");
    }
    Eigen::VectorXd v = vectors.col(col);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0) v = -v;
    const double inv = 1.0 / std::sqrt(std::max(lambda, kEigenFloor));
    for (std::size_t i = 0; i < dim; ++i) {
      t.projection[i * out_dim + k] = v(static_cast<Eigen::Index>(i)) * inv;
    }
  }
  return t;
}

RegionFeatureTensor whiten(const RegionFeatureTensor& tensor,
                           const WhiteningTransform& transform) {
  std::vector<float> out;
  out.reserve(std::size_t{tensor.frames()} * tensor.regions() * transform.out_dim);
  for (std::size_t n = 0; n < tensor.frames(); ++n) {
    for (std::size_t r = 0; r < tensor.regions(); ++r) {
      for (double v : transform.apply(tensor.region(n, r))) out.push_back(static_cast<float>(v));
    }
  }
  normalize_regions(out, transform.out_dim);
  return RegionFeatureTensor(tensor.video_id(), tensor.frames(), tensor.regions(),
                             static_cast<std::uint32_t>(transform.out_dim), std::move(out));
}

}  // namespace dns
