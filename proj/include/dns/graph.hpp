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
#include <limits>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dns/tensor.hpp"

namespace dns::ad {

class Op;

// Handle to a node of a Graph. Only meaningful for the graph that issued it.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const noexcept {
    return id != std::numeric_limits<std::uint32_t>::max();
  }
};

// Batch statistics captured by a training-mode batch_norm node, so that the
// caller can maintain running estimates for inference.
struct BatchStats {
  std::vector<double> mean;
  std::vector<double> variance;  // biased (divided by batch size)
  std::size_t batch = 0;
};

// A static computation graph with reverse-mode differentiation.
//
// Building a node only infers its shape; values are produced by forward(),
// which may be called repeatedly with rebound leaves of the same shapes.
// backward() requires a prior forward() and walks nodes in reverse creation
// order, which is a topological order because inputs always precede users.
class Graph {
 public:
  Graph();
  ~Graph();
  Graph(Graph&&) noexcept;
  Graph& operator=(Graph&&) noexcept;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves. Names must be unique within a graph.
  Var leaf(std::string name, Tensor value, bool requires_grad = false);
  Var constant(Tensor value);

  // Elementwise with numpy-style right-aligned broadcasting.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var x, double factor);
  Var add_scalar(Var x, double offset);

  Var htanh(Var x);
  Var tanh(Var x);
  Var sigmoid(Var x);
  Var relu(Var x);
  Var abs(Var x);
  Var exp(Var x);
  Var log(Var x);
  Var sqrt(Var x);
  Var square(Var x);
  Var erf(Var x, double input_scale = 1.0);  // erf(input_scale * x)

  // Linear algebra and layout.
  Var matmul(Var a, Var b);  // [m,k] x [k,n]
  Var transpose(Var x);      // rank 2
  Var permute(Var x, std::vector<std::size_t> order);
  Var reshape(Var x, Shape shape);
  // Contracts axes_a of a with axes_b of b; result axes are the free axes of
  // a followed by the free axes of b.
  Var tensordot(Var a, Var b, std::vector<std::size_t> axes_a,
                std::vector<std::size_t> axes_b);
  Var concat(const std::vector<Var>& parts, std::size_t axis);
  Var slice(Var x, std::size_t axis, std::size_t start, std::size_t length);
  Var index_select(Var x, std::size_t axis, std::vector<std::size_t> indices);

  // Reductions. max() routes gradient to the lowest index among ties.
  Var sum(Var x, std::size_t axis);
  Var mean(Var x, std::size_t axis);
  Var max(Var x, std::size_t axis);
  Var sum_all(Var x);
  Var mean_all(Var x);

  // Normalizations over the last axis (softmax, layer_norm, l2_normalize) or
  // over axis 0 of a [batch, features] matrix (batch_norm).
  Var softmax(Var x);
  Var layer_norm(Var x, double eps = 1e-5);
  Var batch_norm(Var x, double eps = 1e-5,
                 std::shared_ptr<BatchStats> stats = nullptr);
  Var l2_normalize(Var x, double eps = 1e-12);

  // x: [C,H,W], weight: [O,C,k,k] with odd k, bias: [O]; zero "same" padding.
  Var conv2d(Var x, Var weight, Var bias);
  // 2x2 stride-2 max pooling over [C,H,W]; odd edges form partial windows.
  Var max_pool2d(Var x);

  // Mean binary cross-entropy of sigmoid(logits) against targets.
  Var bce_with_logits(Var logits, Var targets);

  void mark_output(std::string name, Var v);

  // Evaluates every node. `leaves` rebinds named leaves; shapes must match
  // their declaration. Returns the marked outputs.
  std::map<std::string, Tensor> forward(
      const std::map<std::string, Tensor>& leaves = {});

  // Gradients of `output` (seeded with `seed`) for every requires_grad leaf.
  // The single-argument form uses the only marked output.
  std::map<std::string, Tensor> backward(const Tensor& seed);
  std::map<std::string, Tensor> backward(Var output, const Tensor& seed);

  const Tensor& value(Var v) const;
  const Shape& shape(Var v) const;
  bool has_values() const noexcept { return forwarded_; }
  std::size_t node_count() const noexcept;
  Var find_leaf(const std::string& name) const;
  std::vector<std::string> trainable_leaves() const;

  // Smallest distance of any activation to a non-differentiable point seen in
  // the last forward pass (max ties, Htanh/ReLU/abs kinks).
  double kink_margin() const;

 private:
  struct Node;
  Var add_op(std::unique_ptr<Op> op, std::vector<Var> inputs);
  const Node& node(Var v) const;

  std::vector<Node> nodes_;
  std::map<std::string, std::uint32_t> leaf_index_;
  std::map<std::string, std::uint32_t> outputs_;
  bool forwarded_ = false;
};

// Leaves whose analytic and numeric gradients are both at most this size are
// treated as exact zeros by finite_difference_check.
inline constexpr double kZeroGradient = 1e-8;

// Relative error of the analytic gradient of `leaf` against central
// differences: max |analytic - numeric| over entries divided by the largest
// entry of either. The graph must have exactly one scalar output. A non-zero
// `max_entries` probes only that many evenly spaced entries of larger leaves.
double finite_difference_check(Graph& graph, const std::string& leaf,
                               double step, std::size_t max_entries = 0);

}  // namespace dns::ad
