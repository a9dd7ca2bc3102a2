/*
 * Copyright 2026 The IDSF Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "idsf/error.hpp"
#include "idsf/sparse.hpp"
#include "idsf/tensor.hpp"

// Tape-based reverse-mode differentiation over row-major matrices. Only the
// primitives the recommender's forward pass needs are provided.
namespace idsf::ad {

template <typename T>
class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return tape->value(id).shape(); }
  std::size_t rows() const { return shape().rows; }
  std::size_t cols() const { return shape().cols; }
};

// Named trainable tensors in insertion order.
template <typename T>
class ParameterSet {
 public:
  Tensor<T>& add(const std::string& name, Tensor<T> init) {
    if (tensors_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
    order_.push_back(name);
    return tensors_.emplace(name, std::move(init)).first->second;
  }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  Tensor<T>& at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& [_, t] : tensors_) n += t.size();
    return n;
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& name : order_) out.add(name, at(name).template cast<U>());
    return out;
  }

  bool operator==(const ParameterSet& o) const { return order_ == o.order_ && tensors_ == o.tensors_; }

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor<T>> tensors_;
};

// Gradients keyed by parameter name. merge() is safe to call from several
// threads that each ran their own tape.
template <typename T>
class GradientTable {
 public:
  GradientTable() = default;
  GradientTable(const GradientTable& o) : grads_(o.grads_) {}
  GradientTable& operator=(const GradientTable& o) {
    if (this != &o) grads_ = o.grads_;
    return *this;
  }

  void set(const std::string& name, Tensor<T> g) { grads_[name] = std::move(g); }

  bool contains(const std::string& name) const { return grads_.count(name) != 0; }

  const Tensor<T>& at(const std::string& name) const {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw ContractError("no gradient for '" + name + "'");
    return it->second;
  }

  const std::map<std::string, Tensor<T>>& entries() const { return grads_; }

  void merge(const GradientTable& other) {
    std::lock_guard<std::mutex> lock(mutex_);
    for (const auto& [name, g] : other.grads_) {
      auto it = grads_.find(name);
      if (it == grads_.end()) {
        grads_.emplace(name, g);
        continue;
      }
      if (it->second.shape() != g.shape()) throw DimensionError("gradient shape mismatch for " + name);
      for (std::size_t k = 0; k < g.size(); ++k) it->second[k] += g[k];
    }
  }

 private:
  std::map<std::string, Tensor<T>> grads_;
  mutable std::mutex mutex_;
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  // A tape with gradients disabled records values only (inference).
  explicit Tape(bool grad_enabled) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Constant input; never receives a gradient.
  Var<T> constant(Tensor<T> value) { return push_leaf(std::move(value), nullptr, false, {}); }

  // Constant that aliases caller-owned storage (frozen features); the tensor
  // must outlive the tape.
  Var<T> constant_ref(const Tensor<T>& value) { return push_leaf({}, &value, false, {}); }

  // Free-standing differentiable input. Its gradient is read with grad_of().
  Var<T> input(Tensor<T> value) { return push_leaf(std::move(value), nullptr, true, {}); }

  // Binds a parameter by reference; backward() reports its gradient by name.
  Var<T> parameter(const ParameterSet<T>& params, const std::string& name) {
    Var<T> v = push_leaf({}, &params.at(name), true, name);
    param_nodes_[name].push_back(v.id);
    return v;
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.owned;
  }

  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }

  // Gradient buffer of a node, allocated as zeros on first use.
  std::span<T> grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(value(id).size(), T(0));
    return n.grad;
  }

  // Null when nothing flowed into the node.
  const T* grad_or_null(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.grad.empty() ? nullptr : n.grad.data();
  }

  Tensor<T> grad_of(Var<T> v) const {
    const Node& n = nodes_[v.id];
    Tensor<T> g(value(v.id).rows(), value(v.id).cols());
    if (!n.grad.empty()) std::copy(n.grad.begin(), n.grad.end(), g.data());
    return g;
  }

  Var<T> push(Tensor<T> value, bool needs_grad, const char* op, Backward backward) {
    if (!value.all_finite()) {
      throw NumericError(std::string("non-finite output from '") + op + "' " + value.shape().str());
    }
    Node n;
    n.owned = std::move(value);
    n.needs_grad = needs_grad;
    n.op = op;
    if (needs_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  // Reverse sweep from a scalar loss. Every parameter in `params` gets an
  // entry; parameters not reached by the loss get zeros.
  GradientTable<T> backward(Var<T> loss, const ParameterSet<T>& params) {
    run_backward(loss);
    GradientTable<T> table;
    for (const auto& name : params.names()) {
      const Tensor<T>& p = params.at(name);
      Tensor<T> g(p.rows(), p.cols());
      auto it = param_nodes_.find(name);
      if (it != param_nodes_.end()) {
        for (std::size_t id : it->second) {
          const T* src = grad_or_null(id);
          if (!src) continue;
          for (std::size_t k = 0; k < g.size(); ++k) g[k] += src[k];
        }
      }
      table.set(name, std::move(g));
    }
    return table;
  }

  void run_backward(Var<T> loss) {
    if (loss.tape != this) throw ContractError("loss belongs to a different tape");
    if (value(loss.id).size() != 1) {
      throw ContractError("backward needs a scalar loss, got " + value(loss.id).shape().str());
    }
    for (auto& n : nodes_) n.grad.clear();
    grad(loss.id)[0] = T(1);
    for (std::size_t id = loss.id + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.needs_grad || !n.backward || n.grad.empty()) continue;
      n.backward(*this, id);
    }
  }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    std::vector<T> grad;
    bool needs_grad = false;
    const char* op = "leaf";
    Backward backward;
  };

  Var<T> push_leaf(Tensor<T> value, const Tensor<T>* external, bool needs_grad, const std::string&) {
    Node n;
    n.owned = std::move(value);
    n.external = external;
    n.needs_grad = needs_grad && grad_enabled_;
    n.op = needs_grad ? "param" : "const";
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  bool grad_enabled_ = true;
  std::deque<Node> nodes_;
  std::map<std::string, std::vector<std::size_t>> param_nodes_;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;

template <typename T>
Tape<T>& same_tape(Var<T> a, Var<T> b) {
  if (a.tape != b.tape || a.tape == nullptr) throw ContractError("operands live on different tapes");
  return *a.tape;
}

template <typename T>
void require_same_shape(const char* op, Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape " + a.shape().str() + " vs " + b.shape().str());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Structural ops

template <typename T>
Var<T> gather_rows(Var<T> table, std::vector<std::uint32_t> indices) {
  Tape<T>& tape = *table.tape;
  const Tensor<T>& src = table.value();
  const std::size_t width = src.cols();
  Tensor<T> out(indices.size(), width);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= src.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[r]) + " out of " +
                           std::to_string(src.rows()));
    }
    std::copy_n(src.data() + indices[r] * width, width, out.data() + r * width);
  }
  const std::size_t in = table.id;
  return tape.push(std::move(out), tape.needs_grad(in), "gather_rows",
                   [in, idx = std::move(indices), width](Tape<T>& t, std::size_t self) {
                     const T* g = t.grad_or_null(self);
                     auto dst = t.grad(in);
                     for (std::size_t r = 0; r < idx.size(); ++r) {
                       T* row = dst.data() + idx[r] * width;
                       for (std::size_t c = 0; c < width; ++c) row[c] += g[r * width + c];
                     }
                   });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape(a, b);
  if (a.rows() != b.rows()) throw DimensionError("concat_cols: row counts differ");
  const std::size_t n = a.rows(), p = a.cols(), q = b.cols();
  Tensor<T> out(n, p + q);
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(av.data() + r * p, p, out.data() + r * (p + q));
    std::copy_n(bv.data() + r * q, q, out.data() + r * (p + q) + p);
  }
  const std::size_t ia = a.id, ib = b.id;
  return tape.push(std::move(out), tape.needs_grad(ia) || tape.needs_grad(ib), "concat_cols",
                   [ia, ib, n, p, q](Tape<T>& t, std::size_t self) {
                     const T* g = t.grad_or_null(self);
                     if (t.needs_grad(ia)) {
                       auto ga = t.grad(ia);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < p; ++c) ga[r * p + c] += g[r * (p + q) + c];
                     }
                     if (t.needs_grad(ib)) {
                       auto gb = t.grad(ib);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < q; ++c) gb[r * q + c] += g[r * (p + q) + p + c];
                     }
                   });
}

template <typename T>
Var<T> column(Var<T> x, std::size_t j) {
  Tape<T>& tape = *x.tape;
  const Tensor<T>& xv = x.value();
  if (j >= xv.cols()) throw DimensionError("column: index out of range");
  const std::size_t n = xv.rows(), m = xv.cols();
  Tensor<T> out(n, 1);
  for (std::size_t r = 0; r < n; ++r) out[r] = xv(r, j);
  const std::size_t in = x.id;
  return tape.push(std::move(out), tape.needs_grad(in), "column", [in, n, m, j](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_or_null(self);
    auto gx = t.grad(in);
    for (std::size_t r = 0; r < n; ++r) gx[r * m + j] += g[r];
  });
}

template <typename T>
Var<T> transpose(Var<T> x) {
  Tape<T>& tape = *x.tape;
  const Tensor<T>& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  Tensor<T> out(m, n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m; ++c) out(c, r) = xv(r, c);
  const std::size_t in = x.id;
  return tape.push(std::move(out), tape.needs_grad(in), "transpose", [in, n, m](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_or_null(self);
    auto gx = t.grad(in);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) gx[r * m + c] += g[c * n + r];
  });
}

// n x n -> n x 1
template <typename T>
Var<T> diag(Var<T> x) {
  Tape<T>& tape = *x.tape;
  const Tensor<T>& xv = x.value();
  if (xv.rows() != xv.cols()) throw DimensionError("diag: matrix is not square " + xv.shape().str());
  const std::size_t n = xv.rows();
  Tensor<T> out(n, 1);
  for (std::size_t r = 0; r < n; ++r) out[r] = xv(r, r);
  const std::size_t in = x.id;
  return tape.push(std::move(out), tape.needs_grad(in), "diag", [in, n](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_or_null(self);
    auto gx = t.grad(in);
    for (std::size_t r = 0; r < n; ++r) gx[r * n + r] += g[r];
  });
}

// ---------------------------------------------------------------------------
// Linear ops

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape(a, b);
  detail::require_same_shape("add", a, b);
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += bv[k];
  const std::size_t ia = a.id, ib = b.id;
  return tape.push(std::move(out), tape.needs_grad(ia) || tape.needs_grad(ib), "add",
                   [ia, ib](Tape<T>& t, std::size_t self) {
                     const T* g = t.grad_or_null(self);
                     for (std::size_t in : {ia, ib}) {
                       if (!t.needs_grad(in)) continue;
                       auto gi = t.grad(in);
                       for (std::size_t k = 0; k < gi.size(); ++k) gi[k] += g[k];
                     }
                   });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape(a, b);
  detail::require_same_shape("sub", a, b);
  Tensor<T> out = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] -= bv[k];
  const std::size_t ia = a.id, ib = b.id;
  return tape.push(std::move(out), tape.needs_grad(ia) || tape.needs_grad(ib), "sub",
                   [ia, ib](Tape<T>& t, std::size_t self) {
                     const T* g = t.grad_or_null(self);
                     if (t.needs_grad(ia)) {
                       auto ga = t.grad(ia);
                       for (std::size_t k = 0; k < ga.size(); ++k) ga[k] += g[k];
                     }
                     if (t.needs_grad(ib)) {
                       auto gb = t.grad(ib);
                       for (std::size_t k = 0; k < gb.size(); ++k) gb[k] -= g[k];
                     }
                   });
}

// x (n x d) + bias (1 x d) broadcast over rows.
template <typename T>
Var<T> add_row(Var<T> x, Var<T> bias) {
  Tape<T>& tape = detail::same_tape(x, bias);
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_row: bias " + bias.shape().str() + " for input " + x.shape().str());
  }
  Tensor<T> out = x.value();
  const Tensor<T>& bv = bias.value();
  const std::size_t n = out.rows(), d = out.cols();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out(r, c) += bv[c];
  const std::size_t ix = x.id, ib = bias.id;
  return tape.push(std::move(out), tape.needs_grad(ix) || tape.needs_grad(ib), "add_row",
                   [ix, ib, n, d](Tape<T>& t, std::size_t self) {
                     const T* g = t.grad_or_null(self);
                     if (t.needs_grad(ix)) {
                       auto gx = t.grad(ix);
                       for (std::size_t k = 0; k < n * d; ++k) gx[k] += g[k];
                     }
                     if (t.needs_grad(ib)) {
                       auto gb = t.grad(ib);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
                     }
                   });
}

template <typename T>
Var<T> scale(Var<T> x, T s) {
  Tape<T>& tape = *x.tape;
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v *= s;
  const std::size_t in = x.id;
  return tape.push(std::move(out), tape.needs_grad(in), "scale", [in, s](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_or_null(self);
    auto gx = t.grad(in);
    for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += s * g[k];
  });
}

// Multiplies row r of x (n x d) by w[r] (w is n x 1).
template <typename T>
Var<T> scale_rows(Var<T> x, Var<T> w) {
  Tape<T>& tape = detail::same_tape(x, w);
  if (w.cols() != 1 || w.rows() != x.rows()) {
    throw DimensionError("scale_rows: weights " + w.shape().str() + " for input " + x.shape().str());
  }
  const std::size_t n = x.rows(), d = x.cols();
  Tensor<T> out = x.value();
  const Tensor<T>& wv = w.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out(r, c) *= wv[r];
  const std::size_t ix = x.id, iw = w.id;
  return tape.push(std::move(out), tape.needs_grad(ix) || tape.needs_grad(iw), "scale_rows",
                   [ix, iw, n, d](Tape<T>& t, std::size_t self) {
                     const T* g = t.grad_or_null(self);
                     const Tensor<T>& xv = t.value(ix);
                     const Tensor<T>& wv = t.value(iw);
                     if (t.needs_grad(ix)) {
                       auto gx = t.grad(ix);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < d; ++c) gx[r * d + c] += wv[r] * g[r * d + c];
                     }
                     if (t.needs_grad(iw)) {
                       auto gw = t.grad(iw);
                       for (std::size_t r = 0; r < n; ++r) {
                         T acc = 0;
                         for (std::size_t c = 0; c < d; ++c) acc += xv(r, c) * g[r * d + c];
                         gw[r] += acc;
                       }
                     }
                   });
}

// Row-wise inner product: (n x d, n x d) -> n x 1.
template <typename T>
Var<T> rowdot(Var<T> a, Var<T> b) {
  Tape<T>& tape = detail::same_tape(a, b);
  detail::require_same_shape("rowdot", a, b);
  const std::size_t n = a.rows(), d = a.cols();
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  Tensor<T> out(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    T acc = 0;
    for (std::size_t c = 0; c < d; ++c) acc += av(r, c) * bv(r, c);
    out[r] = acc;
  }
  const std::size_t ia = a.id, ib = b.id;
  return tape.push(std::move(out), tape.needs_grad(ia) || tape.needs_grad(ib), "rowdot",
                   [ia, ib, n, d](Tape<T>& t, std::size_t self) {
                     const T* g = t.grad_or_null(self);
                     const Tensor<T>& av = t.value(ia);
                     const Tensor<T>& bv = t.value(ib);
                     if (t.needs_grad(ia)) {
                       auto ga = t.grad(ia);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < d; ++c) ga[r * d + c] += g[r] * bv(r, c);
                     }
                     if (t.needs_grad(ib)) {
                       auto gb = t.grad(ib);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < d; ++c) gb[r * d + c] += g[r] * av(r, c);
                     }
                   });
}

// op(a) * op(b), where op transposes when the flag is set.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool trans_a = false, bool trans_b = false) {
  using detail::Map;
  using detail::MapC;
  Tape<T>& tape = detail::same_tape(a, b);
  const Shape sa = a.shape(), sb = b.shape();
  const std::size_t m = trans_a ? sa.cols : sa.rows;
  const std::size_t ka = trans_a ? sa.rows : sa.cols;
  const std::size_t kb = trans_b ? sb.cols : sb.rows;
  const std::size_t n = trans_b ? sb.rows : sb.cols;
  if (ka != kb) {
    throw DimensionError("matmul: " + sa.str() + (trans_a ? "^T" : "") + " x " + sb.str() +
                         (trans_b ? "^T" : ""));
  }
  Tensor<T> out(m, n);
  {
    MapC<T> A(a.value().data(), sa.rows, sa.cols);
    MapC<T> B(b.value().data(), sb.rows, sb.cols);
    Map<T> C(out.data(), m, n);
    if (!trans_a && !trans_b) C.noalias() = A * B;
    else if (!trans_a && trans_b) C.noalias() = A * B.transpose();
    else if (trans_a && !trans_b) C.noalias() = A.transpose() * B;
    else C.noalias() = A.transpose() * B.transpose();
  }
  const std::size_t ia = a.id, ib = b.id;
  return tape.push(std::move(out), tape.needs_grad(ia) || tape.needs_grad(ib), "matmul",
                   [ia, ib, sa, sb, m, n, trans_a, trans_b](Tape<T>& t, std::size_t self) {
                     MapC<T> G(t.grad_or_null(self), m, n);
                     MapC<T> A(t.value(ia).data(), sa.rows, sa.cols);
                     MapC<T> B(t.value(ib).data(), sb.rows, sb.cols);
                     if (t.needs_grad(ia)) {
                       Map<T> GA(t.grad(ia).data(), sa.rows, sa.cols);
                       // d op(A) = G op(B)^T
                       if (!trans_a && !trans_b) GA.noalias() += G * B.transpose();
                       else if (!trans_a && trans_b) GA.noalias() += G * B;
                       else if (trans_a && !trans_b) GA.noalias() += B * G.transpose();
                       else GA.noalias() += B.transpose() * G.transpose();
                     }
                     if (t.needs_grad(ib)) {
                       Map<T> GB(t.grad(ib).data(), sb.rows, sb.cols);
                       // d op(B) = op(A)^T G
                       if (!trans_a && !trans_b) GB.noalias() += A.transpose() * G;
                       else if (!trans_a && trans_b) GB.noalias() += G.transpose() * A;
                       else if (trans_a && !trans_b) GB.noalias() += A * G;
                       else GB.noalias() += G.transpose() * A.transpose();
                     }
                   });
}

// out = M x for a fixed sparse M; the backward pass aggregates along the
// reversed edges (M^T g).
template <typename T>
Var<T> spmm(const CsrMatrix& matrix, Var<T> x) {
  Tape<T>& tape = *x.tape;
  if (matrix.cols != x.rows()) {
    throw DimensionError("spmm: sparse " + std::to_string(matrix.rows) + "x" + std::to_string(matrix.cols) +
                         " times " + x.shape().str());
  }
  const std::size_t d = x.cols();
  Tensor<T> out(matrix.rows, d);
  matrix.multiply(x.value().data(), d, out.data());
  const std::size_t in = x.id;
  return tape.push(std::move(out), tape.needs_grad(in), "spmm", [in, &matrix, d](Tape<T>& t, std::size_t self) {
    matrix.multiply_transposed_add(t.grad_or_null(self), d, t.grad(in).data());
  });
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities

namespace detail {

template <typename T, typename F, typename D>
Var<T> unary(Var<T> x, const char* op, F f, D dfdx) {
  Tape<T>& tape = *x.tape;
  Tensor<T> out = x.value();
  for (auto& v : out.values()) v = f(v);
  const std::size_t in = x.id;
  return tape.push(std::move(out), tape.needs_grad(in), op, [in, dfdx](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_or_null(self);
    const Tensor<T>& xv = t.value(in);
    const Tensor<T>& yv = t.value(self);
    auto gx = t.grad(in);
    for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += g[k] * dfdx(xv[k], yv[k]);
  });
}

}  // namespace detail

template <typename T>
Var<T> tanh(Var<T> x) {
  return detail::unary(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> exp(Var<T> x) {
  return detail::unary(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(Var<T> x) {
  return detail::unary(
      x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

// log(sigmoid(x)) computed without overflow for large |x|.
template <typename T>
Var<T> log_sigmoid(Var<T> x) {
  return detail::unary(
      x, "log_sigmoid",
      [](T v) { return std::min(v, T(0)) - std::log1p(std::exp(-std::abs(v))); },
      [](T v, T) {
        // d/dx log sigmoid(x) = sigmoid(-x)
        if (v >= 0) {
          const T e = std::exp(-v);
          return e / (T(1) + e);
        }
        return T(1) / (T(1) + std::exp(v));
      });
}

// Row-wise softmax with max subtraction.
template <typename T>
Var<T> softmax_rows(Var<T> x) {
  Tape<T>& tape = *x.tape;
  Tensor<T> out = x.value();
  const std::size_t n = out.rows(), m = out.cols();
  for (std::size_t r = 0; r < n; ++r) {
    auto row = out.row_span(r);
    const T mx = *std::max_element(row.begin(), row.end());
    T total = 0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      total += v;
    }
    for (auto& v : row) v /= total;
  }
  const std::size_t in = x.id;
  return tape.push(std::move(out), tape.needs_grad(in), "softmax_rows", [in, n, m](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_or_null(self);
    const Tensor<T>& y = t.value(self);
    auto gx = t.grad(in);
    for (std::size_t r = 0; r < n; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < m; ++c) dot += g[r * m + c] * y(r, c);
      for (std::size_t c = 0; c < m; ++c) gx[r * m + c] += y(r, c) * (g[r * m + c] - dot);
    }
  });
}

// ---------------------------------------------------------------------------
// Similarity

inline constexpr double kCosineEpsilon = 1e-12;

// Pairwise cosine similarity between rows of a (n x d) and rows of b
// (m x d): S_ij = <a_i, b_j> / max(|a_i| |b_j|, 1e-12).
template <typename T>
Var<T> cosine_matrix(Var<T> a, Var<T> b) {
  using detail::Map;
  using detail::MapC;
  using detail::RowMat;
  Tape<T>& tape = detail::same_tape(a, b);
  if (a.cols() != b.cols()) throw DimensionError("cosine_matrix: widths " + a.shape().str() + " vs " + b.shape().str());
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  MapC<T> A(a.value().data(), n, d);
  MapC<T> B(b.value().data(), m, d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> na = A.rowwise().norm();
  Eigen::Matrix<T, Eigen::Dynamic, 1> nb = B.rowwise().norm();
  Tensor<T> out(n, m);
  Map<T> S(out.data(), n, m);
  S.noalias() = A * B.transpose();
  const T eps = static_cast<T>(kCosineEpsilon);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) S(i, j) /= std::max(na[i] * nb[j], eps);
  const std::size_t ia = a.id, ib = b.id;
  return tape.push(std::move(out), tape.needs_grad(ia) || tape.needs_grad(ib), "cosine_matrix",
                   [ia, ib, n, m, d, na, nb, eps](Tape<T>& t, std::size_t self) {
                     MapC<T> G(t.grad_or_null(self), n, m);
                     MapC<T> S(t.value(self).data(), n, m);
                     MapC<T> A(t.value(ia).data(), n, d);
                     MapC<T> B(t.value(ib).data(), m, d);
                     RowMat<T> scaled(n, m);  // G / D
                     Eigen::Matrix<T, Eigen::Dynamic, 1> r = Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(n);
                     Eigen::Matrix<T, Eigen::Dynamic, 1> c = Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(m);
                     for (std::size_t i = 0; i < n; ++i) {
                       for (std::size_t j = 0; j < m; ++j) {
                         const T denom = na[i] * nb[j];
                         if (denom < eps) {
                           scaled(i, j) = G(i, j) / eps;
                           continue;
                         }
                         scaled(i, j) = G(i, j) / denom;
                         const T gs = G(i, j) * S(i, j);
                         r[i] += gs / (na[i] * na[i]);
                         c[j] += gs / (nb[j] * nb[j]);
                       }
                     }
                     if (t.needs_grad(ia)) {
                       Map<T> GA(t.grad(ia).data(), n, d);
                       GA.noalias() += scaled * B;
                       GA -= r.asDiagonal() * A;
                     }
                     if (t.needs_grad(ib)) {
                       Map<T> GB(t.grad(ib).data(), m, d);
                       GB.noalias() += scaled.transpose() * A;
                       GB -= c.asDiagonal() * B;
                     }
                   });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> sum(Var<T> x) {
  Tape<T>& tape = *x.tape;
  T acc = 0;
  for (T v : x.value().values()) acc += v;
  const std::size_t in = x.id;
  return tape.push(Tensor<T>::scalar(acc), tape.needs_grad(in), "sum", [in](Tape<T>& t, std::size_t self) {
    const T g = t.grad_or_null(self)[0];
    for (auto& v : t.grad(in)) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ContractError("mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(n));
}

// n x m -> n x 1
template <typename T>
Var<T> row_sum(Var<T> x) {
  Tape<T>& tape = *x.tape;
  const Tensor<T>& xv = x.value();
  const std::size_t n = xv.rows(), m = xv.cols();
  Tensor<T> out(n, 1);
  for (std::size_t r = 0; r < n; ++r) {
    T acc = 0;
    for (std::size_t c = 0; c < m; ++c) acc += xv(r, c);
    out[r] = acc;
  }
  const std::size_t in = x.id;
  return tape.push(std::move(out), tape.needs_grad(in), "row_sum", [in, n, m](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_or_null(self);
    auto gx = t.grad(in);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < m; ++c) gx[r * m + c] += g[r];
  });
}

// Squared L2 norm over all entries.
template <typename T>
Var<T> sum_squares(Var<T> x) {
  Tape<T>& tape = *x.tape;
  T acc = 0;
  for (T v : x.value().values()) acc += v * v;
  const std::size_t in = x.id;
  return tape.push(Tensor<T>::scalar(acc), tape.needs_grad(in), "sum_squares", [in](Tape<T>& t, std::size_t self) {
    const T g = t.grad_or_null(self)[0];
    const Tensor<T>& xv = t.value(in);
    auto gx = t.grad(in);
    for (std::size_t k = 0; k < gx.size(); ++k) gx[k] += T(2) * g * xv[k];
  });
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares backward() against central differences for every parameter entry.
// `loss_fn` builds the scalar loss on the given tape from `params`.
inline GradCheckResult grad_check(ParameterSet<double>& params,
                                  const std::function<Var<double>(Tape<double>&, const ParameterSet<double>&)>& loss_fn,
                                  double eps = 1e-5) {
  GradientTable<double> analytic;
  {
    Tape<double> tape;
    analytic = tape.backward(loss_fn(tape, params), params);
  }
  auto eval = [&]() {
    Tape<double> tape;
    return loss_fn(tape, params).value().item();
  };
  GradCheckResult result;
  for (const auto& name : params.names()) {
    Tensor<double>& p = params.at(name);
    const Tensor<double>& g = analytic.at(name);
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double saved = p[k];
      p[k] = saved + eps;
      const double up = eval();
      p[k] = saved - eps;
      const double down = eval();
      p[k] = saved;
      const double fd = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(g[k]), std::abs(fd), 1e-8});
      const double rel = std::abs(g[k] - fd) / denom;
      if (rel > result.max_relative_error) {
        result = {rel, name, k, g[k], fd};
      }
    }
  }
  return result;
}

}  // namespace idsf::ad
