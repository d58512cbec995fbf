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

#include <limits>
#include <memory>
#include <vector>

#include "dns/graph.hpp"
#include "dns/tensor.hpp"

namespace dns::ad {

using Inputs = std::vector<const Tensor*>;
using GradSlots = std::vector<std::vector<double>*>;

// A differentiable operation. forward() may stash whatever backward() needs
// (argmax indices, normalization factors); a graph node owns its op, so the
// stash lives exactly as long as the node's activations.
class Op {
 public:
  virtual ~Op() = default;
  virtual const char* name() const = 0;
  virtual Shape infer(const std::vector<Shape>& in) const = 0;
  virtual Tensor forward(const Inputs& in) = 0;
  // Accumulates into grads[i] for each input whose slot is non-null.
  virtual void backward(const Inputs& in, const Tensor& out,
                        const std::vector<double>& grad_out,
                        const GradSlots& grads) = 0;
  virtual double kink_margin() const {
    return std::numeric_limits<double>::infinity();
  }
};

enum class BinaryKind { add, sub, mul, div };
enum class UnaryKind {
  htanh,
  tanh,
  sigmoid,
  relu,
  abs,
  exp,
  log,
  sqrt,
  square,
  erf,
  affine,
};
enum class ReduceKind { sum, mean, max };

std::unique_ptr<Op> make_binary(BinaryKind kind);
std::unique_ptr<Op> make_unary(UnaryKind kind, double a = 1.0, double b = 0.0);
std::unique_ptr<Op> make_matmul();
std::unique_ptr<Op> make_permute(std::vector<std::size_t> order);
std::unique_ptr<Op> make_reshape(Shape shape);
std::unique_ptr<Op> make_reduce(ReduceKind kind, std::size_t axis);
std::unique_ptr<Op> make_reduce_all(ReduceKind kind);
std::unique_ptr<Op> make_softmax();
std::unique_ptr<Op> make_layer_norm(double eps);
std::unique_ptr<Op> make_batch_norm(double eps, std::shared_ptr<BatchStats> stats);
std::unique_ptr<Op> make_l2_normalize(double eps);
std::unique_ptr<Op> make_conv2d();
std::unique_ptr<Op> make_max_pool2d();
std::unique_ptr<Op> make_concat(std::size_t axis, std::size_t parts);
std::unique_ptr<Op> make_slice(std::size_t axis, std::size_t start,
                               std::size_t length);
std::unique_ptr<Op> make_index_select(std::size_t axis,
                                      std::vector<std::size_t> indices);
std::unique_ptr<Op> make_bce_with_logits();

}  // namespace dns::ad
