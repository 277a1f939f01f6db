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

// Single-hidden-layer ReLU perceptrons used as learned update rules, and the
// Adam optimizer that trains them.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "pinchcomp/autodiff.hpp"

namespace pinchcomp {

inline constexpr int kDefaultHidden = 210;

/// y = W2 relu(W1 x + b1) + b2, weights row-major.
template <class T>
struct BasicMlp {
  int input_dim = 0;
  int hidden_dim = 0;
  int output_dim = 0;
  std::vector<T> w1;  // hidden x input
  std::vector<T> b1;  // hidden
  std::vector<T> w2;  // output x hidden
  std::vector<T> b2;  // output

  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  /// Parameters in the order w1, b1, w2, b2.
  std::vector<T> flatten() const {
    std::vector<T> out;
    out.reserve(parameter_count());
    out.insert(out.end(), w1.begin(), w1.end());
    out.insert(out.end(), b1.begin(), b1.end());
    out.insert(out.end(), w2.begin(), w2.end());
    out.insert(out.end(), b2.begin(), b2.end());
    return out;
  }

  void unflatten(std::span<const T> flat) {
    if (flat.size() != parameter_count()) throw std::invalid_argument("mlp: flat parameter size mismatch");
    auto it = flat.begin();
    for (auto* part : {&w1, &b1, &w2, &b2}) {
      for (auto& v : *part) v = *it++;
    }
  }
};
using MlpParams = BasicMlp<double>;

inline MlpParams mlp_init(int input_dim, int hidden_dim, int output_dim, std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) throw std::invalid_argument("mlp_init: dimensions must be >= 1");
  MlpParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.output_dim = output_dim;
  std::mt19937_64 rng(seed);
  const double r1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  std::uniform_real_distribution<double> u1(-r1, r1);
  std::uniform_real_distribution<double> u2(-r2, r2);
  p.w1.resize(static_cast<std::size_t>(hidden_dim * input_dim));
  for (auto& v : p.w1) v = u1(rng);
  p.b1.assign(static_cast<std::size_t>(hidden_dim), 0.0);
  p.w2.resize(static_cast<std::size_t>(output_dim * hidden_dim));
  for (auto& v : p.w2) v = u2(rng);
  p.b2.assign(static_cast<std::size_t>(output_dim), 0.0);
  return p;
}

/// The same network with every parameter a fresh leaf on the active tape.
inline BasicMlp<ad::Var> on_tape(const MlpParams& p, ad::Tape& tape) {
  BasicMlp<ad::Var> v;
  v.input_dim = p.input_dim;
  v.hidden_dim = p.hidden_dim;
  v.output_dim = p.output_dim;
  auto lift = [&](const std::vector<double>& src, std::vector<ad::Var>& dst) {
    dst.reserve(src.size());
    for (double x : src) dst.push_back(tape.variable(x));
  };
  lift(p.w1, v.w1);
  lift(p.b1, v.b1);
  lift(p.w2, v.w2);
  lift(p.b2, v.b2);
  return v;
}

template <class T>
std::vector<T> mlp_forward(const BasicMlp<T>& p, std::span<const T> x) {
  if (x.size() != static_cast<std::size_t>(p.input_dim)) throw std::invalid_argument("mlp_forward: input length mismatch");
  const auto in = static_cast<std::size_t>(p.input_dim);
  const auto hid = static_cast<std::size_t>(p.hidden_dim);
  std::vector<T> h(hid);
  for (std::size_t j = 0; j < hid; ++j) {
    h[j] = relu(ad::affine(p.b1[j], std::span<const T>(p.w1).subspan(j * in, in), x));
  }
  std::vector<T> y(static_cast<std::size_t>(p.output_dim));
  for (std::size_t o = 0; o < y.size(); ++o) {
    y[o] = ad::affine(p.b2[o], std::span<const T>(p.w2).subspan(o * hid, hid), std::span<const T>(h));
  }
  return y;
}

struct AdamState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;

  static AdamState for_params(const MlpParams& p, double learning_rate) {
    AdamState s;
    s.learning_rate = learning_rate;
    s.m.assign(p.parameter_count(), 0.0);
    s.v.assign(p.parameter_count(), 0.0);
    return s;
  }
};

enum class AdamOutcome { Applied, SkippedNonFinite };

/// One bias-corrected Adam update of `params` against gradient `grads`.
inline AdamOutcome adam_step(AdamState& s, MlpParams& params, std::span<const double> grads) {
  const std::size_t n = params.parameter_count();
  if (grads.size() != n || s.m.size() != n || s.v.size() != n) throw std::invalid_argument("adam_step: shape mismatch");
  for (double g : grads) {
    if (!std::isfinite(g)) return AdamOutcome::SkippedNonFinite;
  }
  s.step += 1;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  std::vector<double> flat = params.flatten();
  for (std::size_t i = 0; i < n; ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grads[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grads[i] * grads[i];
    const double m_hat = c1 > 0.0 ? s.m[i] / c1 : s.m[i];
    const double v_hat = c2 > 0.0 ? s.v[i] / c2 : s.v[i];
    flat[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
  params.unflatten(flat);
  return AdamOutcome::Applied;
}

inline nlohmann::json mlp_to_json(const MlpParams& p) {
  return {{"w1", p.w1}, {"b1", p.b1}, {"w2", p.w2}, {"b2", p.b2}};
}

inline MlpParams mlp_from_json(const nlohmann::json& j, int input_dim, int hidden_dim, int output_dim) {
  MlpParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.output_dim = output_dim;
  p.w1 = j.at("w1").get<std::vector<double>>();
  p.b1 = j.at("b1").get<std::vector<double>>();
  p.w2 = j.at("w2").get<std::vector<double>>();
  p.b2 = j.at("b2").get<std::vector<double>>();
  if (p.w1.size() != static_cast<std::size_t>(hidden_dim * input_dim) || p.b1.size() != static_cast<std::size_t>(hidden_dim) ||
      p.w2.size() != static_cast<std::size_t>(output_dim * hidden_dim) || p.b2.size() != static_cast<std::size_t>(output_dim)) {
    throw std::invalid_argument("mlp_from_json: array sizes do not match dims");
  }
  return p;
}

}  // namespace pinchcomp
