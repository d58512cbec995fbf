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

#include "ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dns/error.hpp"

namespace dns::ad {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void shape_fail(const char* op, const std::vector<Shape>& in,
                             const std::string& why) {
  std::string msg = std::string(op) + ": " + why + " (shapes";
  for (const auto& s : in) msg += " " + shape_string(s);
  msg += ")";
  throw ShapeError(msg);
}

void expect_arity(const char* op, const std::vector<Shape>& in, std::size_t n) {
  if (in.size() != n) {
    shape_fail(op, in, "expected " + std::to_string(n) + " inputs");
  }
}

// Splits a shape around `axis` into (outer, length, inner) extents.
struct AxisView {
  std::size_t outer = 1;
  std::size_t length = 1;
  std::size_t inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t d = 0; d < axis; ++d) v.outer *= s[d];
  v.length = s[axis];
  for (std::size_t d = axis + 1; d < s.size(); ++d) v.inner *= s[d];
  return v;
}

// ---------------------------------------------------------------------------
// Broadcasting elementwise binary ops.

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool identical = false;
};

std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  const std::size_t offset = out.size() - in.size();
  for (std::size_t d = in.size(); d-- > 0;) {
    strides[d + offset] = in[d] == 1 ? 0 : stride;
    stride *= in[d];
  }
  return strides;
}

bool broadcast_shape(const Shape& a, const Shape& b, Shape& out) {
  const std::size_t rank = std::max(a.size(), b.size());
  out.assign(rank, 1);
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t da = d < rank - a.size() ? 1 : a[d - (rank - a.size())];
    const std::size_t db = d < rank - b.size() ? 1 : b[d - (rank - b.size())];
    if (da != db && da != 1 && db != 1) return false;
    out[d] = std::max(da, db);
    if (da == 0 || db == 0) out[d] = 0;
  }
  return true;
}

Broadcast make_plan(const Shape& a, const Shape& b) {
  Broadcast plan;
  broadcast_shape(a, b, plan.out);
  plan.identical = a == b;
  plan.stride_a = aligned_strides(a, plan.out);
  plan.stride_b = aligned_strides(b, plan.out);
  return plan;
}

template <typename F>
void for_each_broadcast(const Broadcast& plan, F&& f) {
  const std::size_t n = element_count(plan.out);
  if (plan.identical) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = plan.out.size();
  std::vector<std::size_t> index(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++index[d];
      ia += plan.stride_a[d];
      ib += plan.stride_b[d];
      if (index[d] < plan.out[d]) break;
      ia -= plan.stride_a[d] * plan.out[d];
      ib -= plan.stride_b[d] * plan.out[d];
      index[d] = 0;
    }
  }
}

class BinaryOp final : public Op {
 public:
  explicit BinaryOp(BinaryKind kind) : kind_(kind) {}
  const char* name() const override {
    switch (kind_) {
      case BinaryKind::add: return "add";
      case BinaryKind::sub: return "sub";
      case BinaryKind::mul: return "mul";
      case BinaryKind::div: return "div";
    }
    return "binary";
  }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 2);
    Shape out;
    if (!broadcast_shape(in[0], in[1], out)) {
      shape_fail(name(), in, "shapes are not broadcast-compatible");
    }
    return out;
  }
  Tensor forward(const Inputs& in) override {
    plan_ = make_plan(in[0]->shape(), in[1]->shape());
    std::vector<double> out(element_count(plan_.out));
    const double* a = in[0]->data();
    const double* b = in[1]->data();
    switch (kind_) {
      case BinaryKind::add:
        for_each_broadcast(plan_, [&](auto o, auto i, auto j) { out[o] = a[i] + b[j]; });
        break;
      case BinaryKind::sub:
        for_each_broadcast(plan_, [&](auto o, auto i, auto j) { out[o] = a[i] - b[j]; });
        break;
      case BinaryKind::mul:
        for_each_broadcast(plan_, [&](auto o, auto i, auto j) { out[o] = a[i] * b[j]; });
        break;
      case BinaryKind::div:
        for_each_broadcast(plan_, [&](auto o, auto i, auto j) { out[o] = a[i] / b[j]; });
        break;
    }
    return Tensor(plan_.out, std::move(out));
  }
  void backward(const Inputs& in, const Tensor&, const std::vector<double>& g,
                const GradSlots& grads) override {
    const double* a = in[0]->data();
    const double* b = in[1]->data();
    auto* ga = grads[0];
    auto* gb = grads[1];
    for_each_broadcast(plan_, [&](auto o, auto i, auto j) {
      const double go = g[o];
      switch (kind_) {
        case BinaryKind::add:
          if (ga) (*ga)[i] += go;
          if (gb) (*gb)[j] += go;
          break;
        case BinaryKind::sub:
          if (ga) (*ga)[i] += go;
          if (gb) (*gb)[j] -= go;
          break;
        case BinaryKind::mul:
          if (ga) (*ga)[i] += go * b[j];
          if (gb) (*gb)[j] += go * a[i];
          break;
        case BinaryKind::div:
          if (ga) (*ga)[i] += go / b[j];
          if (gb) (*gb)[j] -= go * a[i] / (b[j] * b[j]);
          break;
      }
    });
  }

 private:
  BinaryKind kind_;
  Broadcast plan_;
};

// ---------------------------------------------------------------------------
// Elementwise unary ops.

class UnaryOp final : public Op {
 public:
  UnaryOp(UnaryKind kind, double a, double b) : kind_(kind), a_(a), b_(b) {}
  const char* name() const override {
    switch (kind_) {
      case UnaryKind::htanh: return "htanh";
      case UnaryKind::tanh: return "tanh";
      case UnaryKind::sigmoid: return "sigmoid";
      case UnaryKind::relu: return "relu";
      case UnaryKind::abs: return "abs";
      case UnaryKind::exp: return "exp";
      case UnaryKind::log: return "log";
      case UnaryKind::sqrt: return "sqrt";
      case UnaryKind::square: return "square";
      case UnaryKind::erf: return "erf";
      case UnaryKind::affine: return "affine";
    }
    return "unary";
  }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 1);
    return in[0];
  }
  Tensor forward(const Inputs& in) override {
    const auto x = in[0]->values();
    std::vector<double> y(x.size());
    margin_ = kInf;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x[i];
      switch (kind_) {
        case UnaryKind::htanh:
          y[i] = std::clamp(v, -1.0, 1.0);
          margin_ = std::min({margin_, std::abs(v - 1.0), std::abs(v + 1.0)});
          break;
        case UnaryKind::tanh: y[i] = std::tanh(v); break;
        case UnaryKind::sigmoid: y[i] = 1.0 / (1.0 + std::exp(-v)); break;
        case UnaryKind::relu:
          y[i] = v > 0.0 ? v : 0.0;
          margin_ = std::min(margin_, std::abs(v));
          break;
        case UnaryKind::abs:
          y[i] = std::abs(v);
          margin_ = std::min(margin_, std::abs(v));
          break;
        case UnaryKind::exp: y[i] = std::exp(v); break;
        case UnaryKind::log: y[i] = std::log(v); break;
        case UnaryKind::sqrt: y[i] = std::sqrt(v); break;
        case UnaryKind::square: y[i] = v * v; break;
        case UnaryKind::erf: y[i] = std::erf(a_ * v); break;
        case UnaryKind::affine: y[i] = a_ * v + b_; break;
      }
    }
    return Tensor(in[0]->shape(), std::move(y));
  }
  void backward(const Inputs& in, const Tensor& out, const std::vector<double>& g,
                const GradSlots& grads) override {
    auto* gx = grads[0];
    if (!gx) return;
    const auto x = in[0]->values();
    const auto y = out.values();
    constexpr double two_over_sqrt_pi = 2.0 * std::numbers::inv_sqrtpi;
    for (std::size_t i = 0; i < x.size(); ++i) {
      double d = 0.0;
      switch (kind_) {
        case UnaryKind::htanh: d = (x[i] > -1.0 && x[i] < 1.0) ? 1.0 : 0.0; break;
        case UnaryKind::tanh: d = 1.0 - y[i] * y[i]; break;
        case UnaryKind::sigmoid: d = y[i] * (1.0 - y[i]); break;
        case UnaryKind::relu: d = x[i] > 0.0 ? 1.0 : 0.0; break;
        case UnaryKind::abs: d = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0); break;
        case UnaryKind::exp: d = y[i]; break;
        case UnaryKind::log: d = 1.0 / x[i]; break;
        case UnaryKind::sqrt: d = 0.5 / y[i]; break;
        case UnaryKind::square: d = 2.0 * x[i]; break;
        case UnaryKind::erf: {
          const double z = a_ * x[i];
          d = a_ * two_over_sqrt_pi * std::exp(-z * z);
          break;
        }
        case UnaryKind::affine: d = a_; break;
      }
      (*gx)[i] += g[i] * d;
    }
  }
  double kink_margin() const override { return margin_; }

 private:
  UnaryKind kind_;
  double a_;
  double b_;
  double margin_ = kInf;
};

// ---------------------------------------------------------------------------

class MatMulOp final : public Op {
 public:
  const char* name() const override { return "matmul"; }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 2);
    if (in[0].size() != 2 || in[1].size() != 2) shape_fail(name(), in, "operands must be rank 2");
    if (in[0][1] != in[1][0]) shape_fail(name(), in, "inner dimensions differ");
    return {in[0][0], in[1][1]};
  }
  Tensor forward(const Inputs& in) override {
    const std::size_t m = in[0]->dim(0), k = in[0]->dim(1), n = in[1]->dim(1);
    const double* a = in[0]->data();
    const double* b = in[1]->data();
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      double* row = c.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a[i * k + p];
        if (av == 0.0) continue;
        const double* brow = b + p * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
      }
    }
    return Tensor({m, n}, std::move(c));
  }
  void backward(const Inputs& in, const Tensor&, const std::vector<double>& g,
                const GradSlots& grads) override {
    const std::size_t m = in[0]->dim(0), k = in[0]->dim(1), n = in[1]->dim(1);
    const double* a = in[0]->data();
    const double* b = in[1]->data();
    if (auto* ga = grads[0]) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = b + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          (*ga)[i * k + p] += acc;
        }
      }
    }
    if (auto* gb = grads[1]) {
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a[i * k + p];
          if (av == 0.0) continue;
          double* gbrow = gb->data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  }
};

class PermuteOp final : public Op {
 public:
  explicit PermuteOp(std::vector<std::size_t> order) : order_(std::move(order)) {}
  const char* name() const override { return "permute"; }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 1);
    if (order_.size() != in[0].size()) shape_fail(name(), in, "order rank differs");
    std::vector<bool> seen(order_.size(), false);
    Shape out(order_.size());
    for (std::size_t d = 0; d < order_.size(); ++d) {
      if (order_[d] >= order_.size() || seen[order_[d]]) {
        shape_fail(name(), in, "order is not a permutation");
      }
      seen[order_[d]] = true;
      out[d] = in[0][order_[d]];
    }
    return out;
  }
  Tensor forward(const Inputs& in) override {
    build_map(in[0]->shape());
    const double* x = in[0]->data();
    std::vector<double> y(map_.size());
    for (std::size_t o = 0; o < map_.size(); ++o) y[o] = x[map_[o]];
    return Tensor(infer({in[0]->shape()}), std::move(y));
  }
  void backward(const Inputs&, const Tensor&, const std::vector<double>& g,
                const GradSlots& grads) override {
    if (auto* gx = grads[0]) {
      for (std::size_t o = 0; o < map_.size(); ++o) (*gx)[map_[o]] += g[o];
    }
  }

 private:
  // map_[output linear index] = input linear index
  void build_map(const Shape& in) {
    const std::size_t rank = in.size();
    std::vector<std::size_t> in_strides(rank, 1);
    for (std::size_t d = rank; d-- > 1;) in_strides[d - 1] = in_strides[d] * in[d];
    Shape out(rank);
    std::vector<std::size_t> strides(rank);
    for (std::size_t d = 0; d < rank; ++d) {
      out[d] = in[order_[d]];
      strides[d] = in_strides[order_[d]];
    }
    const std::size_t n = element_count(in);
    map_.assign(n, 0);
    std::vector<std::size_t> index(rank, 0);
    std::size_t src = 0;
    for (std::size_t o = 0; o < n; ++o) {
      map_[o] = src;
      for (std::size_t d = rank; d-- > 0;) {
        ++index[d];
        src += strides[d];
        if (index[d] < out[d]) break;
        src -= strides[d] * out[d];
        index[d] = 0;
      }
    }
  }

  std::vector<std::size_t> order_;
  std::vector<std::size_t> map_;
};

class ReshapeOp final : public Op {
 public:
  explicit ReshapeOp(Shape shape) : shape_(std::move(shape)) {}
  const char* name() const override { return "reshape"; }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 1);
    if (element_count(in[0]) != element_count(shape_)) {
      shape_fail(name(), in, "cannot reshape to " + shape_string(shape_));
    }
    return shape_;
  }
  Tensor forward(const Inputs& in) override { return in[0]->reshaped(shape_); }
  void backward(const Inputs&, const Tensor&, const std::vector<double>& g,
                const GradSlots& grads) override {
    if (auto* gx = grads[0]) {
      for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
    }
  }

 private:
  Shape shape_;
};

class ReduceOp final : public Op {
 public:
  ReduceOp(ReduceKind kind, std::size_t axis) : kind_(kind), axis_(axis) {}
  const char* name() const override {
    switch (kind_) {
      case ReduceKind::sum: return "sum";
      case ReduceKind::mean: return "mean";
      case ReduceKind::max: return "max";
    }
    return "reduce";
  }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 1);
    if (axis_ >= in[0].size()) shape_fail(name(), in, "axis out of range");
    if (in[0][axis_] == 0) shape_fail(name(), in, "reduction over empty axis");
    Shape out = in[0];
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis_));
    return out;
  }
  Tensor forward(const Inputs& in) override {
    view_ = axis_view(in[0]->shape(), axis_);
    const double* x = in[0]->data();
    std::vector<double> y(view_.outer * view_.inner);
    if (kind_ == ReduceKind::max) argmax_.assign(y.size(), 0);
    margin_ = kInf;
    for (std::size_t o = 0; o < view_.outer; ++o) {
      for (std::size_t i = 0; i < view_.inner; ++i) {
        const double* base = x + o * view_.length * view_.inner + i;
        const std::size_t slot = o * view_.inner + i;
        if (kind_ == ReduceKind::max) {
          std::size_t best = 0;
          double top = base[0];
          double second = -kInf;
          for (std::size_t l = 1; l < view_.length; ++l) {
            const double v = base[l * view_.inner];
            if (v > top) {
              second = top;
              top = v;
              best = l;
            } else if (v > second) {
              second = v;
            }
          }
          y[slot] = top;
          argmax_[slot] = best;
          if (view_.length > 1) margin_ = std::min(margin_, top - second);
        } else {
          double acc = 0.0;
          for (std::size_t l = 0; l < view_.length; ++l) acc += base[l * view_.inner];
          y[slot] = kind_ == ReduceKind::mean ? acc / static_cast<double>(view_.length) : acc;
        }
      }
    }
    return Tensor(infer({in[0]->shape()}), std::move(y));
  }
  void backward(const Inputs&, const Tensor&, const std::vector<double>& g,
                const GradSlots& grads) override {
    auto* gx = grads[0];
    if (!gx) return;
    const double scale =
        kind_ == ReduceKind::mean ? 1.0 / static_cast<double>(view_.length) : 1.0;
    for (std::size_t o = 0; o < view_.outer; ++o) {
      for (std::size_t i = 0; i < view_.inner; ++i) {
        const std::size_t slot = o * view_.inner + i;
        const std::size_t base = o * view_.length * view_.inner + i;
        if (kind_ == ReduceKind::max) {
          (*gx)[base + argmax_[slot] * view_.inner] += g[slot];
        } else {
          for (std::size_t l = 0; l < view_.length; ++l) {
            (*gx)[base + l * view_.inner] += g[slot] * scale;
          }
        }
      }
    }
  }
  double kink_margin() const override { return margin_; }

 private:
  ReduceKind kind_;
  std::size_t axis_;
  AxisView view_;
  std::vector<std::size_t> argmax_;
  double margin_ = kInf;
};

class ReduceAllOp final : public Op {
 public:
  explicit ReduceAllOp(ReduceKind kind) : kind_(kind) {}
  const char* name() const override {
    return kind_ == ReduceKind::mean ? "mean_all" : "sum_all";
  }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 1);
    if (element_count(in[0]) == 0) shape_fail(name(), in, "empty input");
    return {};
  }
  Tensor forward(const Inputs& in) override {
    double acc = 0.0;
    for (double v : in[0]->values()) acc += v;
    if (kind_ == ReduceKind::mean) acc /= static_cast<double>(in[0]->size());
    return Tensor::scalar(acc);
  }
  void backward(const Inputs& in, const Tensor&, const std::vector<double>& g,
                const GradSlots& grads) override {
    auto* gx = grads[0];
    if (!gx) return;
    const double d = kind_ == ReduceKind::mean
                         ? g[0] / static_cast<double>(in[0]->size())
                         : g[0];
    for (auto& v : *gx) v += d;
  }

 private:
  ReduceKind kind_;
};

class SoftmaxOp final : public Op {
 public:
  const char* name() const override { return "softmax"; }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 1);
    if (in[0].empty() || in[0].back() == 0) shape_fail(name(), in, "needs a non-empty last axis");
    return in[0];
  }
  Tensor forward(const Inputs& in) override {
    const std::size_t n = in[0]->shape().back();
    const std::size_t rows = in[0]->size() / n;
    const double* x = in[0]->data();
    std::vector<double> y(in[0]->size());
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = x + r * n;
      double* yr = y.data() + r * n;
      const double top = *std::max_element(xr, xr + n);
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += (yr[j] = std::exp(xr[j] - top));
      for (std::size_t j = 0; j < n; ++j) yr[j] /= total;
    }
    return Tensor(in[0]->shape(), std::move(y));
  }
  void backward(const Inputs&, const Tensor& out, const std::vector<double>& g,
                const GradSlots& grads) override {
    auto* gx = grads[0];
    if (!gx) return;
    const std::size_t n = out.shape().back();
    const std::size_t rows = out.size() / n;
    const double* y = out.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        (*gx)[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
      }
    }
  }
};

// Normalizes groups to zero mean and unit (biased) variance. Layer norm groups
// along the last axis; batch norm groups along axis 0 of a matrix.
class StandardizeOp final : public Op {
 public:
  StandardizeOp(bool over_batch, double eps, std::shared_ptr<BatchStats> stats)
      : over_batch_(over_batch), eps_(eps), stats_(std::move(stats)) {}
  const char* name() const override { return over_batch_ ? "batch_norm" : "layer_norm"; }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 1);
    if (over_batch_ && in[0].size() != 2) shape_fail(name(), in, "expects [batch, features]");
    if (!over_batch_ && in[0].empty()) shape_fail(name(), in, "expects rank >= 1");
    return in[0];
  }
  Tensor forward(const Inputs& in) override {
    layout(in[0]->shape());
    const double* x = in[0]->data();
    std::vector<double> y(in[0]->size());
    inv_std_.assign(groups_, 0.0);
    if (stats_) {
      stats_->mean.assign(groups_, 0.0);
      stats_->variance.assign(groups_, 0.0);
      stats_->batch = count_;
    }
    for (std::size_t gidx = 0; gidx < groups_; ++gidx) {
      double mean = 0.0;
      for (std::size_t k = 0; k < count_; ++k) mean += x[at(gidx, k)];
      mean /= static_cast<double>(count_);
      double var = 0.0;
      for (std::size_t k = 0; k < count_; ++k) {
        const double d = x[at(gidx, k)] - mean;
        var += d * d;
      }
      var /= static_cast<double>(count_);
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[gidx] = inv;
      for (std::size_t k = 0; k < count_; ++k) y[at(gidx, k)] = (x[at(gidx, k)] - mean) * inv;
      if (stats_) {
        stats_->mean[gidx] = mean;
        stats_->variance[gidx] = var;
      }
    }
    return Tensor(in[0]->shape(), std::move(y));
  }
  void backward(const Inputs&, const Tensor& out, const std::vector<double>& g,
                const GradSlots& grads) override {
    auto* gx = grads[0];
    if (!gx) return;
    const double* y = out.data();
    const double n = static_cast<double>(count_);
    for (std::size_t gidx = 0; gidx < groups_; ++gidx) {
      double mean_g = 0.0;
      double mean_gy = 0.0;
      for (std::size_t k = 0; k < count_; ++k) {
        const std::size_t i = at(gidx, k);
        mean_g += g[i];
        mean_gy += g[i] * y[i];
      }
      mean_g /= n;
      mean_gy /= n;
      for (std::size_t k = 0; k < count_; ++k) {
        const std::size_t i = at(gidx, k);
        (*gx)[i] += inv_std_[gidx] * (g[i] - mean_g - y[i] * mean_gy);
      }
    }
  }

 private:
  void layout(const Shape& s) {
    if (over_batch_) {
      count_ = s[0];
      groups_ = s[1];
    } else {
      count_ = s.back();
      groups_ = count_ ? element_count(s) / count_ : 0;
    }
  }
  std::size_t at(std::size_t group, std::size_t k) const {
    return over_batch_ ? k * groups_ + group : group * count_ + k;
  }

  bool over_batch_;
  double eps_;
  std::shared_ptr<BatchStats> stats_;
  std::size_t groups_ = 0;
  std::size_t count_ = 0;
  std::vector<double> inv_std_;
};

class L2NormalizeOp final : public Op {
 public:
  explicit L2NormalizeOp(double eps) : eps_(eps) {}
  const char* name() const override { return "l2_normalize"; }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 1);
    if (in[0].empty()) shape_fail(name(), in, "expects rank >= 1");
    return in[0];
  }
  Tensor forward(const Inputs& in) override {
    const std::size_t n = in[0]->shape().back();
    const std::size_t rows = n ? in[0]->size() / n : 0;
    const double* x = in[0]->data();
    std::vector<double> y(in[0]->size());
    norms_.assign(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      double ss = 0.0;
      for (std::size_t j = 0; j < n; ++j) ss += x[r * n + j] * x[r * n + j];
      const double norm = std::max(std::sqrt(ss), eps_);
      norms_[r] = norm;
      for (std::size_t j = 0; j < n; ++j) y[r * n + j] = x[r * n + j] / norm;
    }
    return Tensor(in[0]->shape(), std::move(y));
  }
  void backward(const Inputs&, const Tensor& out, const std::vector<double>& g,
                const GradSlots& grads) override {
    auto* gx = grads[0];
    if (!gx) return;
    const std::size_t n = out.shape().back();
    const double* y = out.data();
    for (std::size_t r = 0; r < norms_.size(); ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        (*gx)[r * n + j] += (g[r * n + j] - y[r * n + j] * dot) / norms_[r];
      }
    }
  }

 private:
  double eps_;
  std::vector<double> norms_;
};

class Conv2dOp final : public Op {
 public:
  const char* name() const override { return "conv2d"; }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 3);
    const auto& x = in[0];
    const auto& w = in[1];
    const auto& b = in[2];
    if (x.size() != 3 || w.size() != 4 || b.size() != 1) {
      shape_fail(name(), in, "expects x[C,H,W], weight[O,C,k,k], bias[O]");
    }
    if (w[1] != x[0]) shape_fail(name(), in, "channel count differs");
    if (w[2] != w[3] || w[2] % 2 == 0) shape_fail(name(), in, "kernel must be square and odd");
    if (b[0] != w[0]) shape_fail(name(), in, "bias length differs from output channels");
    return {w[0], x[1], x[2]};
  }
  Tensor forward(const Inputs& in) override {
    const auto& xs = in[0]->shape();
    const auto& ws = in[1]->shape();
    const std::size_t channels = xs[0], height = xs[1], width = xs[2];
    const std::size_t outs = ws[0], k = ws[2];
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const double* x = in[0]->data();
    const double* w = in[1]->data();
    const double* b = in[2]->data();
    std::vector<double> y(outs * height * width);
    for (std::size_t o = 0; o < outs; ++o) {
      double* yo = y.data() + o * height * width;
      std::fill(yo, yo + height * width, b[o]);
      for (std::size_t c = 0; c < channels; ++c) {
        const double* xc = x + c * height * width;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const double wv = w[((o * channels + c) * k + ky) * k + kx];
            if (wv == 0.0) continue;
            const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
            const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
            const auto [y0, y1] = valid_range(dy, height);
            const auto [x0, x1] = valid_range(dx, width);
            for (std::size_t r = y0; r < y1; ++r) {
              const double* src = xc + (r + dy) * width + dx;
              double* dst = yo + r * width;
              for (std::size_t col = x0; col < x1; ++col) dst[col] += wv * src[col];
            }
          }
        }
      }
    }
    return Tensor({outs, height, width}, std::move(y));
  }
  void backward(const Inputs& in, const Tensor&, const std::vector<double>& g,
                const GradSlots& grads) override {
    const auto& xs = in[0]->shape();
    const auto& ws = in[1]->shape();
    const std::size_t channels = xs[0], height = xs[1], width = xs[2];
    const std::size_t outs = ws[0], k = ws[2];
    const auto pad = static_cast<std::ptrdiff_t>(k / 2);
    const double* x = in[0]->data();
    const double* w = in[1]->data();
    auto* gx = grads[0];
    auto* gw = grads[1];
    auto* gb = grads[2];
    for (std::size_t o = 0; o < outs; ++o) {
      const double* go = g.data() + o * height * width;
      if (gb) {
        double acc = 0.0;
        for (std::size_t i = 0; i < height * width; ++i) acc += go[i];
        (*gb)[o] += acc;
      }
      for (std::size_t c = 0; c < channels; ++c) {
        const double* xc = x + c * height * width;
        for (std::size_t ky = 0; ky < k; ++ky) {
          for (std::size_t kx = 0; kx < k; ++kx) {
            const std::size_t widx = ((o * channels + c) * k + ky) * k + kx;
            const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
            const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
            const auto [y0, y1] = valid_range(dy, height);
            const auto [x0, x1] = valid_range(dx, width);
            if (gw) {
              double acc = 0.0;
              for (std::size_t r = y0; r < y1; ++r) {
                const double* src = xc + (r + dy) * width + dx;
                const double* gr = go + r * width;
                for (std::size_t col = x0; col < x1; ++col) acc += gr[col] * src[col];
              }
              (*gw)[widx] += acc;
            }
            if (gx) {
              const double wv = w[widx];
              if (wv == 0.0) continue;
              double* gxc = gx->data() + c * height * width;
              for (std::size_t r = y0; r < y1; ++r) {
                double* dst = gxc + (r + dy) * width + dx;
                const double* gr = go + r * width;
                for (std::size_t col = x0; col < x1; ++col) dst[col] += wv * gr[col];
              }
            }
          }
        }
      }
    }
  }

 private:
  // Output rows/cols r for which r + offset lies inside [0, extent).
  static std::pair<std::size_t, std::size_t> valid_range(std::ptrdiff_t offset,
                                                         std::size_t extent) {
    const auto e = static_cast<std::ptrdiff_t>(extent);
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, -offset);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(e, e - offset);
    if (hi <= lo) return {0, 0};
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
  }
};

class MaxPool2dOp final : public Op {
 public:
  const char* name() const override { return "max_pool2d"; }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 1);
    if (in[0].size() != 3) shape_fail(name(), in, "expects [C,H,W]");
    return {in[0][0], (in[0][1] + 1) / 2, (in[0][2] + 1) / 2};
  }
  Tensor forward(const Inputs& in) override {
    const auto& s = in[0]->shape();
    const std::size_t channels = s[0], height = s[1], width = s[2];
    const std::size_t oh = (height + 1) / 2, ow = (width + 1) / 2;
    const double* x = in[0]->data();
    std::vector<double> y(channels * oh * ow);
    argmax_.assign(y.size(), 0);
    margin_ = kInf;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t r = 0; r < oh; ++r) {
        for (std::size_t col = 0; col < ow; ++col) {
          double top = -kInf;
          double second = -kInf;
          std::size_t best = 0;
          std::size_t count = 0;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t yy = 2 * r + dy, xx = 2 * col + dx;
              if (yy >= height || xx >= width) continue;
              const std::size_t idx = (c * height + yy) * width + xx;
              const double v = x[idx];
              ++count;
              if (v > top) {
                second = top;
                top = v;
                best = idx;
              } else if (v > second) {
                second = v;
              }
            }
          }
          const std::size_t slot = (c * oh + r) * ow + col;
          y[slot] = top;
          argmax_[slot] = best;
          // Ties among exact zeros come from a preceding ReLU; they stay
          // pinned under small perturbations and carry no gradient.
          if (count > 1 && !(top == 0.0 && second == 0.0)) margin_ = std::min(margin_, top - second);
        }
      }
    }
    return Tensor({channels, oh, ow}, std::move(y));
  }
  void backward(const Inputs&, const Tensor&, const std::vector<double>& g,
                const GradSlots& grads) override {
    if (auto* gx = grads[0]) {
      for (std::size_t i = 0; i < argmax_.size(); ++i) (*gx)[argmax_[i]] += g[i];
    }
  }
  double kink_margin() const override { return margin_; }

 private:
  std::vector<std::size_t> argmax_;
  double margin_ = kInf;
};

class ConcatOp final : public Op {
 public:
  ConcatOp(std::size_t axis, std::size_t parts) : axis_(axis), parts_(parts) {}
  const char* name() const override { return "concat"; }
  Shape infer(const std::vector<Shape>& in) const override {
    if (in.empty() || in.size() != parts_) shape_fail(name(), in, "expects at least one input");
    if (axis_ >= in[0].size()) shape_fail(name(), in, "axis out of range");
    Shape out = in[0];
    out[axis_] = 0;
    for (const auto& s : in) {
      if (s.size() != out.size()) shape_fail(name(), in, "ranks differ");
      for (std::size_t d = 0; d < s.size(); ++d) {
        if (d != axis_ && s[d] != in[0][d]) shape_fail(name(), in, "non-axis dimensions differ");
      }
      out[axis_] += s[axis_];
    }
    return out;
  }
  Tensor forward(const Inputs& in) override {
    std::vector<Shape> shapes;
    for (const auto* t : in) shapes.push_back(t->shape());
    const Shape out_shape = infer(shapes);
    const AxisView ov = axis_view(out_shape, axis_);
    std::vector<double> y(element_count(out_shape));
    std::size_t offset = 0;
    for (const auto* t : in) {
      const std::size_t len = t->dim(axis_);
      const std::size_t block = len * ov.inner;
      for (std::size_t o = 0; o < ov.outer; ++o) {
        std::copy_n(t->data() + o * block, block,
                    y.data() + o * ov.length * ov.inner + offset * ov.inner);
      }
      offset += len;
    }
    return Tensor(out_shape, std::move(y));
  }
  void backward(const Inputs& in, const Tensor& out, const std::vector<double>& g,
                const GradSlots& grads) override {
    const AxisView ov = axis_view(out.shape(), axis_);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < in.size(); ++p) {
      const std::size_t len = in[p]->dim(axis_);
      const std::size_t block = len * ov.inner;
      if (auto* gp = grads[p]) {
        for (std::size_t o = 0; o < ov.outer; ++o) {
          const double* src = g.data() + o * ov.length * ov.inner + offset * ov.inner;
          double* dst = gp->data() + o * block;
          for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
        }
      }
      offset += len;
    }
  }

 private:
  std::size_t axis_;
  std::size_t parts_;
};

class IndexSelectOp final : public Op {
 public:
  IndexSelectOp(std::size_t axis, std::vector<std::size_t> indices, const char* name)
      : axis_(axis), indices_(std::move(indices)), name_(name) {}
  const char* name() const override { return name_; }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 1);
    if (axis_ >= in[0].size()) shape_fail(name(), in, "axis out of range");
    for (auto i : indices_) {
      if (i >= in[0][axis_]) shape_fail(name(), in, "index " + std::to_string(i) + " out of range");
    }
    Shape out = in[0];
    out[axis_] = indices_.size();
    return out;
  }
  Tensor forward(const Inputs& in) override {
    const AxisView iv = axis_view(in[0]->shape(), axis_);
    std::vector<double> y(iv.outer * indices_.size() * iv.inner);
    const double* x = in[0]->data();
    for (std::size_t o = 0; o < iv.outer; ++o) {
      for (std::size_t k = 0; k < indices_.size(); ++k) {
        std::copy_n(x + (o * iv.length + indices_[k]) * iv.inner, iv.inner,
                    y.data() + (o * indices_.size() + k) * iv.inner);
      }
    }
    return Tensor(infer({in[0]->shape()}), std::move(y));
  }
  void backward(const Inputs& in, const Tensor&, const std::vector<double>& g,
                const GradSlots& grads) override {
    auto* gx = grads[0];
    if (!gx) return;
    const AxisView iv = axis_view(in[0]->shape(), axis_);
    for (std::size_t o = 0; o < iv.outer; ++o) {
      for (std::size_t k = 0; k < indices_.size(); ++k) {
        const double* src = g.data() + (o * indices_.size() + k) * iv.inner;
        double* dst = gx->data() + (o * iv.length + indices_[k]) * iv.inner;
        for (std::size_t i = 0; i < iv.inner; ++i) dst[i] += src[i];
      }
    }
  }

 private:
  std::size_t axis_;
  std::vector<std::size_t> indices_;
  const char* name_;
};

class BceWithLogitsOp final : public Op {
 public:
  const char* name() const override { return "bce_with_logits"; }
  Shape infer(const std::vector<Shape>& in) const override {
    expect_arity(name(), in, 2);
    if (in[0] != in[1]) shape_fail(name(), in, "logits and targets differ");
    if (element_count(in[0]) == 0) shape_fail(name(), in, "empty batch");
    return {};
  }
  Tensor forward(const Inputs& in) override {
    const auto x = in[0]->values();
    const auto t = in[1]->values();
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      acc += std::max(x[i], 0.0) - x[i] * t[i] + std::log1p(std::exp(-std::abs(x[i])));
    }
    return Tensor::scalar(acc / static_cast<double>(x.size()));
  }
  void backward(const Inputs& in, const Tensor&, const std::vector<double>& g,
                const GradSlots& grads) override {
    const auto x = in[0]->values();
    const auto t = in[1]->values();
    const double scale = g[0] / static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-x[i]));
      if (grads[0]) (*grads[0])[i] += scale * (p - t[i]);
      if (grads[1]) (*grads[1])[i] -= scale * x[i];
    }
  }
};

}  // namespace

std::unique_ptr<Op> make_binary(BinaryKind kind) { return std::make_unique<BinaryOp>(kind); }
std::unique_ptr<Op> make_unary(UnaryKind kind, double a, double b) {
  return std::make_unique<UnaryOp>(kind, a, b);
}
std::unique_ptr<Op> make_matmul() { return std::make_unique<MatMulOp>(); }
std::unique_ptr<Op> make_permute(std::vector<std::size_t> order) {
  return std::make_unique<PermuteOp>(std::move(order));
}
std::unique_ptr<Op> make_reshape(Shape shape) {
  return std::make_unique<ReshapeOp>(std::move(shape));
}
std::unique_ptr<Op> make_reduce(ReduceKind kind, std::size_t axis) {
  return std::make_unique<ReduceOp>(kind, axis);
}
std::unique_ptr<Op> make_reduce_all(ReduceKind kind) {
  return std::make_unique<ReduceAllOp>(kind);
}
std::unique_ptr<Op> make_softmax() { return std::make_unique<SoftmaxOp>(); }
std::unique_ptr<Op> make_layer_norm(double eps) {
  return std::make_unique<StandardizeOp>(false, eps, nullptr);
}
std::unique_ptr<Op> make_batch_norm(double eps, std::shared_ptr<BatchStats> stats) {
  return std::make_unique<StandardizeOp>(true, eps, std::move(stats));
}
std::unique_ptr<Op> make_l2_normalize(double eps) {
  return std::make_unique<L2NormalizeOp>(eps);
}
std::unique_ptr<Op> make_conv2d() { return std::make_unique<Conv2dOp>(); }
std::unique_ptr<Op> make_max_pool2d() { return std::make_unique<MaxPool2dOp>(); }
std::unique_ptr<Op> make_concat(std::size_t axis, std::size_t parts) {
  return std::make_unique<ConcatOp>(axis, parts);
}
std::unique_ptr<Op> make_slice(std::size_t axis, std::size_t start, std::size_t length) {
  std::vector<std::size_t> idx(length);
  for (std::size_t i = 0; i < length; ++i) idx[i] = start + i;
  return std::make_unique<IndexSelectOp>(axis, std::move(idx), "slice");
}
std::unique_ptr<Op> make_index_select(std::size_t axis, std::vector<std::size_t> indices) {
  return std::make_unique<IndexSelectOp>(axis, std::move(indices), "index_select");
}
std::unique_ptr<Op> make_bce_with_logits() { return std::make_unique<BceWithLogitsOp>(); }

}  // namespace dns::ad
