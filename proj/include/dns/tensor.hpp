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

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dns::ad {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

// Dense row-major tensor of 64-bit reals. Immutable once built: copies share
// storage, so tensors can be handed to many graphs and threads freely.
class Tensor {
 public:
  Tensor();  // rank-0 zero
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  static Tensor filled(Shape shape, double value);
  static Tensor from(std::initializer_list<std::size_t> shape,
                     std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_->size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<const double> values() const noexcept { return *data_; }
  const double* data() const noexcept { return data_->data(); }
  double operator[](std::size_t i) const noexcept { return (*data_)[i]; }
  double item() const;

  // Same storage, new shape (element count must match).
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const noexcept {
    return data_ == other.data_;
  }

 private:
  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
};

bool operator==(const Tensor& a, const Tensor& b);

}  // namespace dns::ad
