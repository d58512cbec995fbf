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

#include "dns/graph.hpp"

#include <algorithm>
#include <cmath>

#include "dns/error.hpp"
#include "ops.hpp"

namespace dns::ad {

struct Graph::Node {
  std::unique_ptr<Op> op;  // null for leaves and constants
  std::vector<std::uint32_t> inputs;
  Shape shape;
  Tensor value;
  std::string leaf_name;
  bool requires_grad = false;
  bool needs_grad = false;
};

Graph::Graph() = default;
Graph::~Graph() = default;
Graph::Graph(Graph&&) noexcept = default;
Graph& Graph::operator=(Graph&&) noexcept = default;

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw Error("graph: invalid node handle");
  return nodes_[v.id];
}

Var Graph::leaf(std::string name, Tensor value, bool requires_grad) {
  if (name.empty()) throw Error("graph: leaf name must not be empty");
  if (leaf_index_.contains(name)) throw Error("graph: duplicate leaf '" + name + "'");
  Node n;
  n.shape = value.shape();
  n.value = std::move(value);
  n.leaf_name = name;
  n.requires_grad = requires_grad;
  n.needs_grad = requires_grad;
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.push_back(std::move(n));
  leaf_index_.emplace(std::move(name), id);
  forwarded_ = false;
  return Var{id};
}

Var Graph::constant(Tensor value) {
  Node n;
  n.shape = value.shape();
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  forwarded_ = false;
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::add_op(std::unique_ptr<Op> op, std::vector<Var> inputs) {
  std::vector<Shape> shapes;
  shapes.reserve(inputs.size());
  Node n;
  for (Var v : inputs) {
    const Node& in = node(v);
    shapes.push_back(in.shape);
    n.inputs.push_back(v.id);
    n.needs_grad = n.needs_grad || in.needs_grad;
  }
  n.shape = op->infer(shapes);
  n.op = std::move(op);
  nodes_.push_back(std::move(n));
  forwarded_ = false;
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::add(Var a, Var b) { return add_op(make_binary(BinaryKind::add), {a, b}); }
Var Graph::sub(Var a, Var b) { return add_op(make_binary(BinaryKind::sub), {a, b}); }
Var Graph::mul(Var a, Var b) { return add_op(make_binary(BinaryKind::mul), {a, b}); }
Var Graph::div(Var a, Var b) { return add_op(make_binary(BinaryKind::div), {a, b}); }
Var Graph::scale(Var x, double factor) {
  return add_op(make_unary(UnaryKind::affine, factor, 0.0), {x});
}
Var Graph::add_scalar(Var x, double offset) {
  return add_op(make_unary(UnaryKind::affine, 1.0, offset), {x});
}
Var Graph::htanh(Var x) { return add_op(make_unary(UnaryKind::htanh), {x}); }
Var Graph::tanh(Var x) { return add_op(make_unary(UnaryKind::tanh), {x}); }
Var Graph::sigmoid(Var x) { return add_op(make_unary(UnaryKind::sigmoid), {x}); }
Var Graph::relu(Var x) { return add_op(make_unary(UnaryKind::relu), {x}); }
Var Graph::abs(Var x) { return add_op(make_unary(UnaryKind::abs), {x}); }
Var Graph::exp(Var x) { return add_op(make_unary(UnaryKind::exp), {x}); }
Var Graph::log(Var x) { return add_op(make_unary(UnaryKind::log), {x}); }
Var Graph::sqrt(Var x) { return add_op(make_unary(UnaryKind::sqrt), {x}); }
Var Graph::square(Var x) { return add_op(make_unary(UnaryKind::square), {x}); }
Var Graph::erf(Var x, double input_scale) {
  return add_op(make_unary(UnaryKind::erf, input_scale), {x});
}

Var Graph::matmul(Var a, Var b) { return add_op(make_matmul(), {a, b}); }
Var Graph::transpose(Var x) {
  if (shape(x).size() != 2) {
    throw ShapeError("transpose: expects rank 2, got " + shape_string(shape(x)));
  }
  return permute(x, {1, 0});
}
Var Graph::permute(Var x, std::vector<std::size_t> order) {
  return add_op(make_permute(std::move(order)), {x});
}
Var Graph::reshape(Var x, Shape s) { return add_op(make_reshape(std::move(s)), {x}); }

Var Graph::tensordot(Var a, Var b, std::vector<std::size_t> axes_a,
                     std::vector<std::size_t> axes_b) {
  const Shape sa = shape(a);
  const Shape sb = shape(b);
  auto fail = [&](const std::string& why) {
    throw ShapeError("tensordot: " + why + " (shapes " + shape_string(sa) + " " +
                     shape_string(sb) + ")");
  };
  if (axes_a.size() != axes_b.size()) fail("axis lists differ in length");
  auto split = [&](const Shape& s, const std::vector<std::size_t>& axes,
                   std::vector<std::size_t>& free) {
    std::vector<bool> used(s.size(), false);
    for (auto ax : axes) {
      if (ax >= s.size() || used[ax]) fail("bad contraction axis");
      used[ax] = true;
    }
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (!used[d]) free.push_back(d);
    }
  };
  std::vector<std::size_t> free_a, free_b;
  split(sa, axes_a, free_a);
  split(sb, axes_b, free_b);
  std::size_t contracted = 1;
  for (std::size_t i = 0; i < axes_a.size(); ++i) {
    if (sa[axes_a[i]] != sb[axes_b[i]]) fail("contracted dimensions differ");
    contracted *= sa[axes_a[i]];
  }
  Shape out;
  std::size_t rows = 1, cols = 1;
  for (auto d : free_a) {
    out.push_back(sa[d]);
    rows *= sa[d];
  }
  for (auto d : free_b) {
    out.push_back(sb[d]);
    cols *= sb[d];
  }
  std::vector<std::size_t> order_a = free_a;
  order_a.insert(order_a.end(), axes_a.begin(), axes_a.end());
  std::vector<std::size_t> order_b = axes_b;
  order_b.insert(order_b.end(), free_b.begin(), free_b.end());
  auto is_identity = [](const std::vector<std::size_t>& order) {
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (order[i] != i) return false;
    }
    return true;
  };
  Var pa = is_identity(order_a) ? a : permute(a, order_a);
  Var pb = is_identity(order_b) ? b : permute(b, order_b);
  Var prod = matmul(reshape(pa, {rows, contracted}), reshape(pb, {contracted, cols}));
  return reshape(prod, out);
}

Var Graph::concat(const std::vector<Var>& parts, std::size_t axis) {
  return add_op(make_concat(axis, parts.size()), parts);
}
Var Graph::slice(Var x, std::size_t axis, std::size_t start, std::size_t length) {
  return add_op(make_slice(axis, start, length), {x});
}
Var Graph::index_select(Var x, std::size_t axis, std::vector<std::size_t> indices) {
  return add_op(make_index_select(axis, std::move(indices)), {x});
}

Var Graph::sum(Var x, std::size_t axis) { return add_op(make_reduce(ReduceKind::sum, axis), {x}); }
Var Graph::mean(Var x, std::size_t axis) {
  return add_op(make_reduce(ReduceKind::mean, axis), {x});
}
Var Graph::max(Var x, std::size_t axis) { return add_op(make_reduce(ReduceKind::max, axis), {x}); }
Var Graph::sum_all(Var x) { return add_op(make_reduce_all(ReduceKind::sum), {x}); }
Var Graph::mean_all(Var x) { return add_op(make_reduce_all(ReduceKind::mean), {x}); }

Var Graph::softmax(Var x) { return add_op(make_softmax(), {x}); }
Var Graph::layer_norm(Var x, double eps) { return add_op(make_layer_norm(eps), {x}); }
Var Graph::batch_norm(Var x, double eps, std::shared_ptr<BatchStats> stats) {
  return add_op(make_batch_norm(eps, std::move(stats)), {x});
}
Var Graph::l2_normalize(Var x, double eps) { return add_op(make_l2_normalize(eps), {x}); }
Var Graph::conv2d(Var x, Var weight, Var bias) {
  return add_op(make_conv2d(), {x, weight, bias});
}
Var Graph::max_pool2d(Var x) { return add_op(make_max_pool2d(), {x}); }
Var Graph::bce_with_logits(Var logits, Var targets) {
  return add_op(make_bce_with_logits(), {logits, targets});
}

void Graph::mark_output(std::string name, Var v) {
  node(v);
  outputs_[std::move(name)] = v.id;
}

std::map<std::string, Tensor> Graph::forward(const std::map<std::string, Tensor>& leaves) {
  for (const auto& [name, value] : leaves) {
    auto it = leaf_index_.find(name);
    if (it == leaf_index_.end()) throw Error("graph: unknown leaf '" + name + "'");
    Node& n = nodes_[it->second];
    if (value.shape() != n.shape) {
      throw ShapeError("graph: leaf '" + name + "' declared " + shape_string(n.shape) +
                       ", bound " + shape_string(value.shape()));
    }
    n.value = value;
  }
  std::vector<const Tensor*> ins;
  for (Node& n : nodes_) {
    if (!n.op) continue;
    ins.clear();
    for (auto id : n.inputs) ins.push_back(&nodes_[id].value);
    n.value = n.op->forward(ins);
  }
  forwarded_ = true;
  std::map<std::string, Tensor> out;
  for (const auto& [name, id] : outputs_) out.emplace(name, nodes_[id].value);
  return out;
}

std::map<std::string, Tensor> Graph::backward(const Tensor& seed) {
  if (outputs_.size() != 1) {
    throw Error("graph: backward(seed) needs exactly one marked output");
  }
  return backward(Var{outputs_.begin()->second}, seed);
}

std::map<std::string, Tensor> Graph::backward(Var output, const Tensor& seed) {
  if (!forwarded_) throw Error("graph: backward called before forward");
  const Node& out = node(output);
  if (seed.shape() != out.shape) {
    throw ShapeError("graph: seed " + shape_string(seed.shape()) + " does not match output " +
                     shape_string(out.shape));
  }
  std::vector<std::vector<double>> grads(nodes_.size());
  std::map<std::string, Tensor> result;
  if (out.needs_grad) grads[output.id].assign(seed.values().begin(), seed.values().end());

  std::vector<const Tensor*> ins;
  GradSlots slots;
  for (std::uint32_t id = output.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.op || grads[id].empty()) continue;
    ins.clear();
    slots.clear();
    for (auto in : n.inputs) {
      ins.push_back(&nodes_[in].value);
      if (nodes_[in].needs_grad) {
        if (grads[in].empty()) grads[in].assign(element_count(nodes_[in].shape), 0.0);
        slots.push_back(&grads[in]);
      } else {
        slots.push_back(nullptr);
      }
    }
    n.op->backward(ins, n.value, grads[id], slots);
    std::vector<double>().swap(grads[id]);
  }
  for (const auto& [name, id] : leaf_index_) {
    const Node& n = nodes_[id];
    if (!n.requires_grad) continue;
    if (grads[id].empty()) grads[id].assign(element_count(n.shape), 0.0);
    result.emplace(name, Tensor(n.shape, std::move(grads[id])));
  }
  return result;
}

const Tensor& Graph::value(Var v) const {
  if (!forwarded_) throw Error("graph: value requested before forward");
  return node(v).value;
}

const Shape& Graph::shape(Var v) const { return node(v).shape; }

std::size_t Graph::node_count() const noexcept { return nodes_.size(); }

Var Graph::find_leaf(const std::string& name) const {
  auto it = leaf_index_.find(name);
  if (it == leaf_index_.end()) throw Error("graph: unknown leaf '" + name + "'");
  return Var{it->second};
}

std::vector<std::string> Graph::trainable_leaves() const {
  std::vector<std::string> names;
  for (const auto& [name, id] : leaf_index_) {
    if (nodes_[id].requires_grad) names.push_back(name);
  }
  return names;
}

double Graph::kink_margin() const {
  double margin = std::numeric_limits<double>::infinity();
  for (const Node& n : nodes_) {
    if (n.op) margin = std::min(margin, n.op->kink_margin());
  }
  return margin;
}

double finite_difference_check(Graph& graph, const std::string& leaf, double step,
                               std::size_t max_entries) {
  if (step <= 0.0) throw Error("finite_difference_check: step must be positive");
  const Var v = graph.find_leaf(leaf);
  auto outputs = graph.forward();
  if (outputs.size() != 1 || outputs.begin()->second.size() != 1) {
    throw ShapeError("finite_difference_check: graph output must be a single scalar");
  }
  const Tensor seed(outputs.begin()->second.shape(), {1.0});
  const auto grads = graph.backward(seed);
  auto git = grads.find(leaf);
  if (git == grads.end()) {
    throw Error("finite_difference_check: leaf '" + leaf + "' does not require grad");
  }
  const Tensor base = graph.value(v);
  const auto analytic = git->second.values();
  std::vector<double> probe(base.values().begin(), base.values().end());
  double diff = 0.0;
  double scale = 0.0;
  const std::size_t n = probe.size();
  const std::size_t probes = max_entries == 0 ? n : std::min(n, max_entries);
  for (std::size_t k = 0; k < probes; ++k) {
    const std::size_t i = k * n / probes;
    const double original = probe[i];
    probe[i] = original + step;
    const double plus = graph.forward({{leaf, Tensor(base.shape(), probe)}}).begin()->second.item();
    probe[i] = original - step;
    const double minus = graph.forward({{leaf, Tensor(base.shape(), probe)}}).begin()->second.item();
    probe[i] = original;
    const double numeric = (plus - minus) / (2.0 * step);
    diff = std::max(diff, std::abs(analytic[i] - numeric));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric)});
  }
  graph.forward({{leaf, base}});
  // Central differences carry roundoff near 1e-11 at this step size, so a
  // leaf whose gradient is below kZeroGradient everywhere counts as agreeing.
  return scale <= kZeroGradient ? 0.0 : diff / scale;
}

}  // namespace dns::ad
