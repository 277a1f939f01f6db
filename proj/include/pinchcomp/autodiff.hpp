// Copyright 2026 The pinchcomp Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode automatic differentiation over real scalars.
//
// A Tape records every operation on `Var` values as a node in an append-only
// DAG (insertion order is a topological order). Two backward passes exist:
//
//   * `Tape::gradient`          numeric adjoints, used for meta-gradients.
//   * `Tape::gradient_on_tape`  adjoints recorded as new tape nodes, so that a
//                               quantity built from a gradient can itself be
//                               differentiated (second order through the
//                               learned update rule).
//
// Operations on Vars go to the tape activated on the current thread through
// `Tape::Scope`. Each worker thread owns its own tape.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace pinchcomp::ad {

enum class Op : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,    // c * a, c stored in aux
  Shift,    // a + c
  RDiv,     // c / a
  Sqrt,
  Sin,
  Cos,
  Log,
  Exp,
  Square,
  Relu,
  Affine,   // b + sum_i w_i * x_i, numeric first-order partials only
  Identity,
};

struct Node {
  double value;
  double aux;
  std::uint32_t first;  // offset into the parent/partial arrays
  std::uint32_t count;
  Op op;
};

class Tape;

/// A scalar that is either a constant or a reference to a tape node.
class Var {
 public:
  static constexpr std::uint32_t kConstant = std::numeric_limits<std::uint32_t>::max();

  Var() = default;
  Var(double v) : value_(v) {}  // NOLINT: implicit constants keep formulas readable
  Var(double v, std::uint32_t index) : value_(v), index_(index) {}

  double value() const { return value_; }
  std::uint32_t index() const { return index_; }
  bool is_constant() const { return index_ == kConstant; }

 private:
  double value_ = 0.0;
  std::uint32_t index_ = kConstant;
};

class Tape {
 public:
  /// Makes `tape` the active tape of the calling thread for the scope's lifetime.
  class Scope {
   public:
    explicit Scope(Tape& tape) : previous_(current()) { current() = &tape; }
    ~Scope() { current() = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape& active() {
    Tape* t = current();
    if (t == nullptr) throw std::logic_error("autodiff: no active tape on this thread");
    return *t;
  }
  static bool has_active() { return current() != nullptr; }

  Var variable(double value) { return push(Op::Leaf, value, 0.0, {}, {}); }

  /// Fresh node that depends on `v` with unit partial; a leaf when `v` is constant.
  /// Used to cut out a sub-graph whose gradient is wanted with respect to `v`.
  Var fork(Var v) {
    if (v.is_constant()) return variable(v.value());
    const std::uint32_t p[] = {v.index()};
    const double d[] = {1.0};
    return push(Op::Identity, v.value(), 0.0, p, d);
  }

  std::size_t size() const { return nodes_.size(); }
  std::size_t edge_count() const { return parents_.size(); }
  double value(std::uint32_t index) const { return nodes_.at(index).value; }

  void clear() {
    nodes_.clear();
    parents_.clear();
    partials_.clear();
  }

  void reserve(std::size_t nodes, std::size_t edges) {
    nodes_.reserve(nodes);
    parents_.reserve(edges);
    partials_.reserve(edges);
  }

  /// Full adjoint vector d(output)/d(node) for every node up to `output`.
  std::vector<double> adjoints(Var output) const {
    if (output.is_constant()) return std::vector<double>(nodes_.size(), 0.0);
    std::vector<double> adj(output.index() + 1, 0.0);
    adj[output.index()] = 1.0;
    for (std::uint32_t i = output.index() + 1; i-- > 0;) {
      const double a = adj[i];
      if (a == 0.0) continue;
      const Node& n = nodes_[i];
      for (std::uint32_t e = n.first; e < n.first + n.count; ++e) {
        adj[parents_[e]] += partials_[e] * a;
      }
    }
    adj.resize(nodes_.size(), 0.0);
    return adj;
  }

  /// d(output)/d(wrt[i]); constants in `wrt` receive 0.
  std::vector<double> gradient(Var output, std::span<const Var> wrt) const {
    std::vector<double> out(wrt.size(), 0.0);
    if (output.is_constant()) return out;
    const std::vector<double> adj = adjoints(output);
    for (std::size_t i = 0; i < wrt.size(); ++i) {
      if (!wrt[i].is_constant()) out[i] = adj[wrt[i].index()];
    }
    return out;
  }

  /// Gradient of `output` with respect to `wrt`, recorded on the tape.
  ///
  /// Only the nodes created at or after the earliest `wrt` node are swept, so
  /// `wrt` should be fresh forks taken right before building `output`. Paths
  /// that leave that window are treated as constants. Affine nodes are not
  /// supported inside the window.
  std::vector<Var> gradient_on_tape(Var output, std::span<const Var> wrt) {
    std::vector<Var> out(wrt.size(), Var(0.0));
    if (output.is_constant()) return out;
    std::uint32_t lo = output.index();
    for (const Var& w : wrt) {
      if (!w.is_constant()) lo = std::min(lo, w.index());
    }
    const std::uint32_t hi = output.index();
    std::vector<Var> adj(hi - lo + 1, Var(0.0));
    std::vector<char> touched(hi - lo + 1, 0);
    adj[hi - lo] = Var(1.0);
    touched[hi - lo] = 1;

    std::vector<Var> local;
    for (std::uint32_t i = hi + 1; i-- > lo;) {
      if (!touched[i - lo]) continue;
      const Var a = adj[i - lo];
      const Node node = nodes_[i];  // copy: the tape grows below
      if (node.op == Op::Affine) {
        throw std::logic_error("autodiff: gradient_on_tape cannot differentiate affine nodes");
      }
      local_partials(i, node, local);
      for (std::uint32_t e = 0; e < node.count; ++e) {
        const std::uint32_t p = parents_[node.first + e];
        if (p < lo) continue;
        const Var contribution = mul(a, local[e]);
        if (touched[p - lo]) {
          adj[p - lo] = add(adj[p - lo], contribution);
        } else {
          adj[p - lo] = contribution;
          touched[p - lo] = 1;
        }
      }
    }
    for (std::size_t k = 0; k < wrt.size(); ++k) {
      if (!wrt[k].is_constant() && touched[wrt[k].index() - lo]) out[k] = adj[wrt[k].index() - lo];
    }
    return out;
  }

  // Primitive builders. Constant operands are folded into the node so that
  // each node carries only its tape-resident parents.

  Var add(Var a, Var b) {
    if (a.is_constant() && b.is_constant()) return Var(a.value() + b.value());
    if (a.is_constant()) return shift(b, a.value());
    if (b.is_constant()) return shift(a, b.value());
    const std::uint32_t p[] = {a.index(), b.index()};
    const double d[] = {1.0, 1.0};
    return push(Op::Add, a.value() + b.value(), 0.0, p, d);
  }

  Var sub(Var a, Var b) {
    if (a.is_constant() && b.is_constant()) return Var(a.value() - b.value());
    if (b.is_constant()) return shift(a, -b.value());
    if (a.is_constant()) return shift(neg(b), a.value());
    const std::uint32_t p[] = {a.index(), b.index()};
    const double d[] = {1.0, -1.0};
    return push(Op::Sub, a.value() - b.value(), 0.0, p, d);
  }

  Var mul(Var a, Var b) {
    if (a.is_constant() && b.is_constant()) return Var(a.value() * b.value());
    if (a.is_constant()) return scale(b, a.value());
    if (b.is_constant()) return scale(a, b.value());
    const std::uint32_t p[] = {a.index(), b.index()};
    const double d[] = {b.value(), a.value()};
    return push(Op::Mul, a.value() * b.value(), 0.0, p, d);
  }

  Var div(Var a, Var b) {
    if (a.is_constant() && b.is_constant()) return Var(a.value() / b.value());
    if (b.is_constant()) return scale(a, 1.0 / b.value());
    const double v = a.value() / b.value();
    if (a.is_constant()) {
      const std::uint32_t p[] = {b.index()};
      const double d[] = {-v / b.value()};
      return push(Op::RDiv, v, a.value(), p, d);
    }
    const std::uint32_t p[] = {a.index(), b.index()};
    const double d[] = {1.0 / b.value(), -v / b.value()};
    return push(Op::Div, v, 0.0, p, d);
  }

  Var neg(Var a) {
    if (a.is_constant()) return Var(-a.value());
    const std::uint32_t p[] = {a.index()};
    const double d[] = {-1.0};
    return push(Op::Neg, -a.value(), 0.0, p, d);
  }

  Var scale(Var a, double c) {
    if (a.is_constant()) return Var(c * a.value());
    const std::uint32_t p[] = {a.index()};
    const double d[] = {c};
    return push(Op::Scale, c * a.value(), c, p, d);
  }

  Var shift(Var a, double c) {
    if (a.is_constant()) return Var(a.value() + c);
    const std::uint32_t p[] = {a.index()};
    const double d[] = {1.0};
    return push(Op::Shift, a.value() + c, c, p, d);
  }

  /// Value and derivative of an elementary unary op.
  static double eval_unary(Op op, double x, double& d) {
    double v = 0.0;
    switch (op) {
      case Op::Sqrt: v = std::sqrt(x); d = 0.5 / v; break;
      case Op::Sin: v = std::sin(x); d = std::cos(x); break;
      case Op::Cos: v = std::cos(x); d = -std::sin(x); break;
      case Op::Log: v = std::log(x); d = 1.0 / x; break;
      case Op::Exp: v = std::exp(x); d = v; break;
      case Op::Square: v = x * x; d = 2.0 * x; break;
      case Op::Relu: v = x > 0.0 ? x : 0.0; d = x > 0.0 ? 1.0 : 0.0; break;
      default: throw std::logic_error("autodiff: not a unary op");
    }
    return v;
  }

  Var unary(Op op, Var a) {
    double d = 0.0;
    const double v = eval_unary(op, a.value(), d);
    if (a.is_constant()) return Var(v);
    const std::uint32_t p[] = {a.index()};
    const double dd[] = {d};
    return push(op, v, 0.0, p, dd);
  }

  /// bias + sum_i weights[i] * inputs[i] as one node.
  Var affine(Var bias, std::span<const Var> weights, std::span<const Var> inputs) {
    if (weights.size() != inputs.size()) throw std::invalid_argument("autodiff: affine size mismatch");
    double v = bias.value();
    const std::size_t base = parents_.size();
    const auto first = static_cast<std::uint32_t>(base);
    // Size once for the worst case, write through raw pointers, then trim.
    parents_.resize(base + 1 + 2 * weights.size());
    partials_.resize(parents_.size());
    std::uint32_t* pp = parents_.data() + base;
    double* dp = partials_.data() + base;
    std::size_t k = 0;
    if (!bias.is_constant()) {
      pp[k] = bias.index();
      dp[k++] = 1.0;
    }
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const Var& w = weights[i];
      const Var& x = inputs[i];
      v += w.value() * x.value();
      if (!w.is_constant()) {
        pp[k] = w.index();
        dp[k++] = x.value();
      }
      if (!x.is_constant()) {
        pp[k] = x.index();
        dp[k++] = w.value();
      }
    }
    parents_.resize(base + k);
    partials_.resize(base + k);
    const auto count = static_cast<std::uint32_t>(parents_.size()) - first;
    if (count == 0) return Var(v);
    nodes_.push_back(Node{v, 0.0, first, count, Op::Affine});
    return Var(v, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

 private:
  static Tape*& current() {
    thread_local Tape* tape = nullptr;
    return tape;
  }

  Var push(Op op, double value, double aux, std::span<const std::uint32_t> parents,
           std::span<const double> partials) {
    const auto first = static_cast<std::uint32_t>(parents_.size());
    for (std::size_t e = 0; e < parents.size(); ++e) {
      parents_.push_back(parents[e]);
      partials_.push_back(partials[e]);
    }
    nodes_.push_back(Node{value, aux, first, static_cast<std::uint32_t>(parents.size()), op});
    return Var(value, static_cast<std::uint32_t>(nodes_.size() - 1));
  }

  Var node_var(std::uint32_t index) const { return Var(nodes_[index].value, index); }

  // Partials of node `i` with respect to each tape parent, as Vars.
  void local_partials(std::uint32_t i, const Node& node, std::vector<Var>& out) {
    out.clear();
    const Var self = node_var(i);
    auto parent = [&](std::uint32_t e) { return node_var(parents_[node.first + e]); };
    switch (node.op) {
      case Op::Leaf: break;
      case Op::Add: out = {Var(1.0), Var(1.0)}; break;
      case Op::Sub: out = {Var(1.0), Var(-1.0)}; break;
      case Op::Mul: out = {parent(1), parent(0)}; break;
      case Op::Div: {
        const Var b = parent(1);
        out = {div(Var(1.0), b), neg(div(self, b))};
        break;
      }
      case Op::Neg: out = {Var(-1.0)}; break;
      case Op::Scale: out = {Var(node.aux)}; break;
      case Op::Shift: out = {Var(1.0)}; break;
      case Op::Identity: out = {Var(1.0)}; break;
      case Op::RDiv: out = {neg(div(self, parent(0)))}; break;
      case Op::Sqrt: out = {div(Var(0.5), self)}; break;
      case Op::Sin: out = {unary(Op::Cos, parent(0))}; break;
      case Op::Cos: out = {neg(unary(Op::Sin, parent(0)))}; break;
      case Op::Log: out = {div(Var(1.0), parent(0))}; break;
      case Op::Exp: out = {self}; break;
      case Op::Square: out = {scale(parent(0), 2.0)}; break;
      case Op::Relu: out = {Var(partials_[node.first])}; break;
      case Op::Affine: throw std::logic_error("autodiff: affine");
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> parents_;
  std::vector<double> partials_;
};

// Arithmetic on Vars. A mixed expression of constants stays constant and
// never touches the tape.

namespace detail {
inline Tape& tape_for(Var a, Var b) {
  (void)a;
  (void)b;
  return Tape::active();
}
}  // namespace detail

inline Var operator+(Var a, Var b) {
  if (a.is_constant() && b.is_constant()) return Var(a.value() + b.value());
  return detail::tape_for(a, b).add(a, b);
}
inline Var operator-(Var a, Var b) {
  if (a.is_constant() && b.is_constant()) return Var(a.value() - b.value());
  return detail::tape_for(a, b).sub(a, b);
}
inline Var operator*(Var a, Var b) {
  if (a.is_constant() && b.is_constant()) return Var(a.value() * b.value());
  return detail::tape_for(a, b).mul(a, b);
}
inline Var operator/(Var a, Var b) {
  if (a.is_constant() && b.is_constant()) return Var(a.value() / b.value());
  return detail::tape_for(a, b).div(a, b);
}
inline Var operator-(Var a) {
  if (a.is_constant()) return Var(-a.value());
  return Tape::active().neg(a);
}
inline Var& operator+=(Var& a, Var b) { return a = a + b; }
inline Var& operator-=(Var& a, Var b) { return a = a - b; }
inline Var& operator*=(Var& a, Var b) { return a = a * b; }
inline Var& operator/=(Var& a, Var b) { return a = a / b; }

namespace detail {
inline Var unary(Op op, Var a) {
  if (a.is_constant()) {
    double d = 0.0;
    return Var(Tape::eval_unary(op, a.value(), d));
  }
  return Tape::active().unary(op, a);
}
}  // namespace detail

inline Var sqrt(Var a) { return detail::unary(Op::Sqrt, a); }
inline Var sin(Var a) { return detail::unary(Op::Sin, a); }
inline Var cos(Var a) { return detail::unary(Op::Cos, a); }
inline Var log(Var a) { return detail::unary(Op::Log, a); }
inline Var exp(Var a) { return detail::unary(Op::Exp, a); }
inline Var square(Var a) { return detail::unary(Op::Square, a); }
inline Var relu(Var a) { return detail::unary(Op::Relu, a); }

inline double value_of(double x) { return x; }
inline double value_of(Var x) { return x.value(); }

/// Stop-gradient: the value as a constant.
inline double detach(double x) { return x; }
inline Var detach(Var x) { return Var(x.value()); }

inline Var affine(Var bias, std::span<const Var> weights, std::span<const Var> inputs) {
  bool all_constant = bias.is_constant();
  for (std::size_t i = 0; i < weights.size() && all_constant; ++i) {
    all_constant = weights[i].is_constant() && inputs[i].is_constant();
  }
  if (all_constant) {
    double v = bias.value();
    for (std::size_t i = 0; i < weights.size(); ++i) v += weights[i].value() * inputs[i].value();
    return Var(v);
  }
  return Tape::active().affine(bias, weights, inputs);
}

inline double affine(double bias, std::span<const double> weights, std::span<const double> inputs) {
  double v = bias;
  for (std::size_t i = 0; i < weights.size(); ++i) v += weights[i] * inputs[i];
  return v;
}

}  // namespace pinchcomp::ad

namespace pinchcomp {

// Scalar helpers shared by the double and Var code paths.
inline double square(double x) { return x * x; }
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
using ad::relu;
using ad::square;

/// Worst relative error between `analytic` and a numerical derivative of `f` at `point`.
///
/// The numerical derivative is the Richardson-extrapolated central difference
/// with per-coordinate step `step * max(1, |x_i|)`. Relative error per
/// coordinate is |a - n| / max(|a|, |n|, floor).
inline double finite_diff_check(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> point, std::span<const double> analytic,
                                double step, double floor = 1e-12) {
  if (analytic.size() != point.size()) throw std::invalid_argument("finite_diff_check: size mismatch");
  std::vector<double> x(point.begin(), point.end());
  auto central = [&](std::size_t i, double h) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    return (fp - fm) / (2.0 * h);
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = step * std::max(1.0, std::abs(x[i]));
    const double numeric = (4.0 * central(i, 0.5 * h) - central(i, h)) / 3.0;
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / scale);
  }
  return worst;
}

}  // namespace pinchcomp
