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

// Gradient-based meta-learning of the beamforming matrices and PA positions.
//
// Each outer iteration starts the variables from the same initial point,
// runs N_i learned beamforming updates (BVN) with the positions held at the
// latest P*, then N_i learned position updates (PPN) with the new beams held,
// rescales the beams into the power budget and scores the result with the
// penalised meta-loss. An epoch averages N_o such losses and takes one Adam
// step on the parameters of both networks, differentiating through every
// unrolled update.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pinchcomp/autodiff.hpp"
#include "pinchcomp/channel.hpp"
#include "pinchcomp/geometry.hpp"
#include "pinchcomp/nets.hpp"
#include "pinchcomp/rate.hpp"

namespace pinchcomp {

/// Raised when training produces a non-finite epoch loss.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PenaltyMode { Hinge, Indicator };

/// Starting point of the network parameters.
enum class NetInit {
  Random,             // uniform fan-in initialisation throughout
  GradientFollowing,  // part of the hidden layer passes the normalised gradient through
};

/// How the position network sees a waveguide.
enum class PpnWiring {
  PerWaveguide,  // input/output P_n: the waveguide's position gradient
  PerPa,         // input/output K: per-user rate gradients of one PA
};

struct GmlConfig {
  int inner_iterations = 10;
  int outer_iterations = 200;
  int epochs = 50;
  double zeta1 = 1e-4;
  double zeta2 = 1e-2;
  double lr_w = 1e-3;
  double lr_p = 1.6e-3;
  PenaltyMode penalty = PenaltyMode::Hinge;
  int truncation = 0;  // 0: full unroll
  std::uint64_t seed = 1;
  int hidden = kDefaultHidden;
  PpnWiring ppn_wiring = PpnWiring::PerWaveguide;
  double bvn_step = 1.0;            // BVN output multiplier, in units of sqrt(P_BS)
  double ppn_reach = 0.0;           // metres per unit PPN output; 0 selects the guided wavelength
  NetInit init = NetInit::GradientFollowing;
  double output_init_scale = 0.01;  // shrinks the random part of the output layers
  double follow_gain_w = 0.8;       // first BVN step along the normalised gradient
  double follow_shrink_w = 0.005;   // last / first BVN step, geometric in between
  double follow_gain_p = 0.3;       // first PPN step along the normalised gradient
  double follow_shrink_p = 0.01;    // last / first PPN step

  void validate() const {
    if (inner_iterations < 1 || outer_iterations < 1 || epochs < 1) {
      throw std::invalid_argument("gml: inner, outer and epoch counts must be >= 1");
    }
    if (zeta1 < 0.0 || zeta2 < 0.0) throw std::invalid_argument("gml: penalty weights must be non-negative");
    if (!(lr_w > 0.0) || !(lr_p > 0.0)) throw std::invalid_argument("gml: learning rates must be positive");
    if (truncation < 0) throw std::invalid_argument("gml: truncation must be >= 0");
    if (hidden < 1) throw std::invalid_argument("gml: hidden width must be >= 1");
    if (!(bvn_step > 0.0) || !(ppn_reach >= 0.0) || !(output_init_scale >= 0.0)) {
      throw std::invalid_argument("gml: bvn_step must be positive, ppn_reach and output_init_scale non-negative");
    }
    if (init == NetInit::GradientFollowing &&
        (follow_gain_w < 0.0 || follow_gain_p < 0.0 || !(follow_shrink_w > 0.0) || !(follow_shrink_p > 0.0))) {
      throw std::invalid_argument("gml: follow gains must be non-negative and shrink factors positive");
    }
  }
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finaliser over (seed, stream)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

template <class T>
struct BasicLoss {
  T rate_loss{};
  T threshold_loss{};
  T spacing_loss{};
  T range_loss{};
  T total{};
  T sum_rate{};
};
using LossBreakdown = BasicLoss<double>;

inline LossBreakdown value_of(const BasicLoss<ad::Var>& l) {
  return {l.rate_loss.value(), l.threshold_loss.value(), l.spacing_loss.value(),
          l.range_loss.value(), l.total.value(),         l.sum_rate.value()};
}

inline double abs_value(double x) { return std::abs(x); }
inline ad::Var abs_value(ad::Var x) { return x.value() >= 0.0 ? x : -x; }

/// Penalised meta-loss: -sum rate plus QoS, spacing and range penalties.
template <class T>
BasicLoss<T> meta_loss(const SystemGeometry& g, const BasicBeamforming<T>& W, const BasicPinching<T>& P,
                       const GmlConfig& c) {
  const bool hinge = c.penalty == PenaltyMode::Hinge;
  const BasicChannel<T> a = effective_channels(g, P);
  std::vector<T> rates;
  BasicLoss<T> l;
  l.sum_rate = sum_rate_value(a, W, g.noise_power, &rates);
  l.rate_loss = T(0.0) - l.sum_rate;

  T threshold(0.0);
  for (const T& r : rates) {
    if (hinge) {
      threshold += relu(T(g.rate_threshold) - r);
    } else if (g.rate_threshold - ad::value_of(r) > 0.0) {
      threshold += T(1.0);
    }
  }
  l.threshold_loss = T(c.zeta1) * threshold;

  T spacing(0.0);
  T range(0.0);
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (std::size_t n = 0; n < P.x[b].size(); ++n) {
      const auto& xs = P.x[b][n];
      const double span = g.waveguides[b].at(n).span;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = i + 1; j < xs.size(); ++j) {
          const T gap = abs_value(xs[i] - xs[j]);
          if (hinge) {
            spacing += relu(T(g.min_spacing) - gap);
          } else if (g.min_spacing - ad::value_of(gap) > 0.0) {
            spacing += T(1.0);
          }
        }
        if (hinge) {
          range += relu(T(0.0) - xs[i]) + relu(xs[i] - T(span));
        } else if (ad::value_of(xs[i]) < 0.0 || ad::value_of(xs[i]) > span) {
          range += T(1.0);
        }
      }
    }
  }
  l.spacing_loss = T(c.zeta2) * spacing;
  l.range_loss = T(c.zeta2) * range;
  l.total = l.rate_loss + l.threshold_loss + l.spacing_loss + l.range_loss;
  return l;
}

/// Scales each BS's beams down onto its power budget when they exceed it.
template <class T>
BasicBeamforming<T> normalize_power(const BasicBeamforming<T>& W, const std::array<double, kBsCount>& budgets) {
  using std::sqrt;
  BasicBeamforming<T> out = W;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    const T used = transmit_power(W.w[b]);
    if (ad::value_of(used) <= budgets[b]) continue;
    const T factor = sqrt(T(budgets[b]) / used);
    for (auto& z : out.w[b].data) z = factor * z;
  }
  return out;
}

template <class T>
BasicBeamforming<T> lift(const BeamformingState& W) {
  BasicBeamforming<T> out;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    out.w[b] = CMatrix<T>(W.w[b].rows, W.w[b].cols);
    for (std::size_t i = 0; i < W.w[b].data.size(); ++i) out.w[b].data[i] = Cplx<T>::from(W.w[b].data[i]);
  }
  return out;
}

template <class T>
BasicPinching<T> lift(const PinchingState& P) {
  BasicPinching<T> out;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (const auto& wg : P.x[b]) out.x[b].emplace_back(wg.begin(), wg.end());
  }
  return out;
}

template <class T>
BasicChannel<T> lift(const EffectiveChannel& a) {
  BasicChannel<T> out;
  out.gains.resize(a.gains.size());
  for (std::size_t k = 0; k < a.gains.size(); ++k) {
    for (std::size_t b = 0; b < kBsCount; ++b) {
      for (const auto& z : a.gains[k][b]) out.gains[k][b].push_back(Cplx<T>::from(z));
    }
  }
  return out;
}

inline BeamformingState values(const BasicBeamforming<ad::Var>& W) {
  BeamformingState out;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    out.w[b] = CMatrix<double>(W.w[b].rows, W.w[b].cols);
    for (std::size_t i = 0; i < W.w[b].data.size(); ++i) out.w[b].data[i] = value_of(W.w[b].data[i]);
  }
  return out;
}

inline PinchingState values(const BasicPinching<ad::Var>& P) {
  PinchingState out;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (const auto& wg : P.x[b]) {
      std::vector<double> xs;
      for (const auto& v : wg) xs.push_back(v.value());
      out.x[b].push_back(std::move(xs));
    }
  }
  return out;
}

inline BasicBeamforming<ad::Var> detach(const BasicBeamforming<ad::Var>& W) { return lift<ad::Var>(values(W)); }
inline BasicPinching<ad::Var> detach(const BasicPinching<ad::Var>& P) { return lift<ad::Var>(values(P)); }

/// Where an inner update sits in the unrolled trajectory.
struct IterationContext {
  int iteration = 0;
  int inner_iterations = 1;
  int* skipped_updates = nullptr;  // incremented on a non-finite gradient
};

inline constexpr double kPowerFeatureCap = 4.0;

namespace detail {

inline bool all_finite(const std::vector<ad::Var>& v) {
  for (const auto& x : v)
    if (!std::isfinite(x.value())) return false;
  return true;
}

/// v / (||v|| + 1e-12); the tiny offset under the root keeps the derivative finite at 0.
inline std::vector<ad::Var> normalized(const std::vector<ad::Var>& v) {
  ad::Var ss(1e-24);
  for (const auto& x : v) ss += x * x;
  const ad::Var scale = ad::Var(1.0) / (ad::sqrt(ss) + ad::Var(1e-12));
  std::vector<ad::Var> out;
  out.reserve(v.size());
  for (const auto& x : v) out.push_back(x * scale);
  return out;
}

}  // namespace detail

/// One learned beamforming update W <- W + BVN(grad_W R), positions held fixed
/// through the channel `a`. BVN runs once per (BS, waveguide) row.
inline BasicBeamforming<ad::Var> inner_update_W(const SystemGeometry& g, const BasicBeamforming<ad::Var>& W,
                                                const BasicChannel<ad::Var>& a, const BasicMlp<ad::Var>& bvn,
                                                const IterationContext& ctx, double step = 1.0) {
  ad::Tape& tape = ad::Tape::active();
  const std::size_t K = g.user_count();
  if (bvn.input_dim != static_cast<int>(2 * K + 2) || bvn.output_dim < static_cast<int>(2 * K)) {
    throw std::invalid_argument("inner_update_W: BVN dimensions do not match 2K+2");
  }
  BasicBeamforming<ad::Var> forked = W;
  std::vector<ad::Var> leaves;
  for (auto& m : forked.w) {
    for (auto& z : m.data) {
      z.re = tape.fork(z.re);
      z.im = tape.fork(z.im);
      leaves.push_back(z.re);
      leaves.push_back(z.im);
    }
  }
  const ad::Var rate = sum_rate_value(a, forked, g.noise_power);
  const std::vector<ad::Var> grad = tape.gradient_on_tape(rate, leaves);
  if (!detail::all_finite(grad)) {
    if (ctx.skipped_updates != nullptr) ++*ctx.skipped_updates;
    return W;
  }

  BasicBeamforming<ad::Var> out = W;
  const double progress = static_cast<double>(ctx.iteration) / static_cast<double>(ctx.inner_iterations);
  std::size_t offset = 0;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    const CMatrix<ad::Var>& m = W.w[b];
    // Budget fraction in use, capped so a growing W cannot feed back without bound.
    const ad::Var fraction = transmit_power(m) / ad::Var(g.power_budget[b]);
    const ad::Var used = fraction - relu(fraction - ad::Var(kPowerFeatureCap));
    const double amplitude = step * std::sqrt(g.power_budget[b]);
    for (std::size_t n = 0; n < m.rows; ++n) {
      std::vector<ad::Var> row(grad.begin() + static_cast<std::ptrdiff_t>(offset + 2 * n * K),
                               grad.begin() + static_cast<std::ptrdiff_t>(offset + 2 * (n + 1) * K));
      std::vector<ad::Var> features = detail::normalized(row);
      features.push_back(used);
      features.push_back(ad::Var(progress));
      const std::vector<ad::Var> delta = mlp_forward(bvn, std::span<const ad::Var>(features));
      for (std::size_t k = 0; k < K; ++k) {
        Cplx<ad::Var>& z = out.w[b](n, k);
        z.re = z.re + ad::Var(amplitude) * delta[2 * k];
        z.im = z.im + ad::Var(amplitude) * delta[2 * k + 1];
      }
    }
    offset += 2 * m.rows * m.cols;
  }
  return out;
}

inline BasicBeamforming<ad::Var> inner_update_W(const SystemGeometry& g, const BasicBeamforming<ad::Var>& W,
                                                const PinchingState& P, const BasicMlp<ad::Var>& bvn,
                                                const IterationContext& ctx, double step = 1.0) {
  return inner_update_W(g, W, lift<ad::Var>(effective_channels(g, P)), bvn, ctx, step);
}

/// One learned position update P <- P + r * PPN(grad_u R) with u = x / D and
/// step unit r (`reach` metres, D when 0), beams held fixed.
inline BasicPinching<ad::Var> inner_update_P(const SystemGeometry& g, const BasicBeamforming<ad::Var>& W,
                                             const BasicPinching<ad::Var>& P, const BasicMlp<ad::Var>& ppn,
                                             const IterationContext& ctx, PpnWiring wiring = PpnWiring::PerWaveguide,
                                             double reach = 0.0) {
  ad::Tape& tape = ad::Tape::active();
  const std::size_t K = g.user_count();
  BasicPinching<ad::Var> forked = P;
  std::vector<ad::Var> leaves;
  for (auto& bs : forked.x) {
    for (auto& wg : bs) {
      for (auto& x : wg) {
        x = tape.fork(x);
        leaves.push_back(x);
      }
    }
  }
  const BasicChannel<ad::Var> a = effective_channels(g, forked);

  // gradients[u][i]: d(objective u)/dx_i; one objective (the sum rate) or one per user.
  std::vector<std::vector<ad::Var>> gradients;
  if (wiring == PpnWiring::PerWaveguide) {
    gradients.push_back(tape.gradient_on_tape(sum_rate_value(a, W, g.noise_power), leaves));
  } else {
    for (std::size_t k = 0; k < K; ++k) {
      gradients.push_back(tape.gradient_on_tape(user_rate(a, W, k, g.noise_power).rate, leaves));
    }
  }
  for (const auto& grad : gradients) {
    if (!detail::all_finite(grad)) {
      if (ctx.skipped_updates != nullptr) ++*ctx.skipped_updates;
      return P;
    }
  }

  BasicPinching<ad::Var> out = P;
  const double progress = static_cast<double>(ctx.iteration) / static_cast<double>(ctx.inner_iterations);
  std::size_t offset = 0;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (std::size_t n = 0; n < P.x[b].size(); ++n) {
      const double span = g.waveguides[b][n].span;
      const ad::Var step(reach > 0.0 ? reach : span);
      const std::size_t count = P.x[b][n].size();
      if (wiring == PpnWiring::PerWaveguide) {
        if (ppn.input_dim != static_cast<int>(count) + 1 || ppn.output_dim != static_cast<int>(count)) {
          throw std::invalid_argument("inner_update_P: PPN dimensions do not match P_n + 1 -> P_n");
        }
        std::vector<ad::Var> row;
        for (std::size_t i = 0; i < count; ++i) row.push_back(gradients[0][offset + i] * ad::Var(span));
        std::vector<ad::Var> features = detail::normalized(row);
        features.push_back(ad::Var(progress));
        const std::vector<ad::Var> delta = mlp_forward(ppn, std::span<const ad::Var>(features));
        for (std::size_t i = 0; i < count; ++i) out.x[b][n][i] = P.x[b][n][i] + step * delta[i];
      } else {
        if (ppn.input_dim != static_cast<int>(K) || ppn.output_dim != static_cast<int>(K)) {
          throw std::invalid_argument("inner_update_P: PPN dimensions do not match K");
        }
        for (std::size_t i = 0; i < count; ++i) {
          std::vector<ad::Var> per_user;
          for (std::size_t k = 0; k < K; ++k) per_user.push_back(gradients[k][offset + i] * ad::Var(span));
          const std::vector<ad::Var> features = detail::normalized(per_user);
          const std::vector<ad::Var> delta = mlp_forward(ppn, std::span<const ad::Var>(features));
          ad::Var mean(0.0);
          for (const auto& d : delta) mean += d;
          mean = mean / ad::Var(static_cast<double>(K));
          out.x[b][n][i] = P.x[b][n][i] + step * mean;
        }
      }
      offset += count;
    }
  }
  return out;
}

struct TraceEntry {
  int epoch = 0;
  int outer = 0;  // index within the epoch
  LossBreakdown loss;
  double sum_rate = 0.0;  // recomputed from the candidate
  bool feasible = false;
  double best_so_far = 0.0;
};

struct TrainResult {
  BeamformingState best_w;
  PinchingState best_p;
  double best_sum_rate = 0.0;
  RateReport best_report;
  bool found_feasible = false;  // false: best_* is the initial point
  std::vector<TraceEntry> trace;
  MlpParams bvn;
  MlpParams ppn;
  int skipped_updates = 0;
  int skipped_adam_steps = 0;
};

struct Candidate {
  BeamformingState w;
  PinchingState p;
  RateReport report;
  bool feasible = false;
};

inline constexpr double kClampSlack = 1e-6;

/// Feasibility-normalises a candidate: near-boundary positions are clamped
/// into [0, D], then power, spacing, range and QoS are checked.
inline Candidate assess_candidate(const SystemGeometry& g, BeamformingState w, PinchingState p) {
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (std::size_t n = 0; n < p.x[b].size(); ++n) {
      const double span = g.waveguides[b][n].span;
      for (double& x : p.x[b][n]) {
        if (x < 0.0 && x > -kClampSlack) x = 0.0;
        if (x > span && x < span + kClampSlack) x = span;
      }
    }
  }
  Candidate c;
  c.report = sum_rate(effective_channels(g, p), w, g.noise_power, g.rate_threshold);
  c.feasible = power_check(w, g.power_budget).feasible && placement_feasible(g, p) && c.report.all_qos() &&
               std::isfinite(c.report.sum_rate);
  c.w = std::move(w);
  c.p = std::move(p);
  return c;
}

/// Evenly spread PAs: x_p = p * D / (P_n + 1).
inline PinchingState equidistant_positions(const SystemGeometry& g) {
  PinchingState p;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (const auto& wg : g.waveguides[b]) {
      std::vector<double> xs;
      for (int i = 1; i <= wg.pa_count; ++i) xs.push_back(i * wg.span / (wg.pa_count + 1));
      p.x[b].push_back(std::move(xs));
    }
  }
  return p;
}

/// Matched-filter direction plus complex Gaussian perturbation, scaled to
/// half of each BS's budget.
inline BeamformingState initial_beamforming(const SystemGeometry& g, const PinchingState& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const EffectiveChannel a = effective_channels(g, p);
  BeamformingState W = zero_beamforming(g);
  const std::size_t K = g.user_count();
  for (std::size_t b = 0; b < kBsCount; ++b) {
    const std::size_t N = W.w[b].rows;
    const double spread = 1.0 / std::sqrt(2.0 * static_cast<double>(N));
    for (std::size_t k = 0; k < K; ++k) {
      const auto& row = a.row(k, static_cast<int>(b));
      double norm = 0.0;
      for (const auto& z : row) norm += norm2(z);
      norm = std::sqrt(norm);
      for (std::size_t n = 0; n < N; ++n) {
        const Cplx<double> mrt = norm > 0.0 ? conj(row[n]) : Cplx<double>{0.0, 0.0};
        W.w[b](n, k) = Cplx<double>{(norm > 0.0 ? mrt.re / norm : 0.0) + spread * normal(rng),
                                    (norm > 0.0 ? mrt.im / norm : 0.0) + spread * normal(rng)};
      }
    }
    const double used = transmit_power(W.w[b]);
    const double factor = used > 0.0 ? std::sqrt(0.5 * g.power_budget[b] / used) : 0.0;
    for (auto& z : W.w[b].data) z = factor * z;
  }
  return W;
}

namespace detail {

inline void clear_hidden_unit(MlpParams& m, std::size_t unit) {
  const auto in = static_cast<std::size_t>(m.input_dim);
  const auto hid = static_cast<std::size_t>(m.hidden_dim);
  for (std::size_t i = 0; i < in; ++i) m.w1[unit * in + i] = 0.0;
  m.b1[unit] = 0.0;
  for (std::size_t o = 0; o < static_cast<std::size_t>(m.output_dim); ++o) m.w2[o * hid + unit] = 0.0;
}

}  // namespace detail

/// Makes output j (j < coords) equal gain * input j, using the hidden units
/// relu(x) and relu(-x). The remaining hidden units are left as they are.
inline void seed_gradient_follower(MlpParams& m, int coords, double gain) {
  if (coords > m.input_dim || coords > m.output_dim || 2 * coords > m.hidden_dim) {
    throw std::invalid_argument("seed_gradient_follower: network too small for the pass-through");
  }
  const auto in = static_cast<std::size_t>(m.input_dim);
  const auto hid = static_cast<std::size_t>(m.hidden_dim);
  for (std::size_t j = 0; j < static_cast<std::size_t>(coords); ++j) {
    detail::clear_hidden_unit(m, 2 * j);
    detail::clear_hidden_unit(m, 2 * j + 1);
    m.w1[2 * j * in + j] = 1.0;
    m.w1[(2 * j + 1) * in + j] = -1.0;
    m.w2[j * hid + 2 * j] = gain;
    m.w2[j * hid + 2 * j + 1] = -gain;
  }
}

/// Makes output j (j < coords) equal gain * ratio^i * input j at inner step i,
/// where input `progress_input` carries t = i / steps and inputs j lie in
/// [-1, 1]. With the step gate G_i(t) = [t >= i / steps],
///
///   u_{j,i} = relu(x_j + 1 + M (t - t_i)),  v_i = relu(1 + M (t - t_i)),
///   u_{j,i} - v_i = G_i(t) x_j    (M = 3 steps keeps closed gates at zero),
///
/// and the telescoping sum of (s_i - s_{i-1}) G_i(t) x_j over i gives s(t) x_j.
/// Uses steps * (coords + 1) hidden units; the rest are left as they are.
inline void seed_scheduled_follower(MlpParams& m, int coords, int progress_input, int steps, double gain,
                                    double ratio) {
  if (steps < 1 || coords > m.output_dim || coords >= m.input_dim || progress_input < coords ||
      progress_input >= m.input_dim || steps * (coords + 1) > m.hidden_dim) {
    throw std::invalid_argument("seed_scheduled_follower: network too small for the schedule");
  }
  const auto in = static_cast<std::size_t>(m.input_dim);
  const auto hid = static_cast<std::size_t>(m.hidden_dim);
  const auto n = static_cast<std::size_t>(steps);
  const auto t_in = static_cast<std::size_t>(progress_input);
  const double M = 3.0 * steps;
  double previous = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = gain * std::pow(ratio, static_cast<double>(i));
    const double increment = s - previous;
    previous = s;
    const double t_i = static_cast<double>(i) / static_cast<double>(steps);
    const std::size_t v = i;
    detail::clear_hidden_unit(m, v);
    m.w1[v * in + t_in] = M;
    m.b1[v] = 1.0 - M * t_i;
    for (std::size_t j = 0; j < static_cast<std::size_t>(coords); ++j) {
      const std::size_t u = n + j * n + i;
      detail::clear_hidden_unit(m, u);
      m.w1[u * in + j] = 1.0;
      m.w1[u * in + t_in] = M;
      m.b1[u] = 1.0 - M * t_i;
      m.w2[j * hid + u] = increment;
      m.w2[j * hid + v] -= increment;
    }
  }
}

/// Network sizes for a geometry: BVN 2K+2 -> hidden -> 2K+2; PPN P_n+1 -> hidden -> P_n
/// per waveguide, or K -> hidden -> K per PA.
struct NetworkDims {
  std::array<int, 3> bvn{};
  std::array<int, 3> ppn{};
};

inline NetworkDims network_dims(const SystemGeometry& g, const GmlConfig& c) {
  const int K = static_cast<int>(g.user_count());
  int pn = 0;
  for (const auto& bs : g.waveguides) {
    for (const auto& wg : bs) {
      if (pn != 0 && wg.pa_count != pn && c.ppn_wiring == PpnWiring::PerWaveguide) {
        throw std::invalid_argument("gml: per-waveguide PPN needs equal PA counts on every waveguide");
      }
      pn = wg.pa_count;
    }
  }
  if (c.ppn_wiring == PpnWiring::PerWaveguide) return {{2 * K + 2, c.hidden, 2 * K + 2}, {pn + 1, c.hidden, pn}};
  return {{2 * K + 2, c.hidden, 2 * K + 2}, {K, c.hidden, K}};
}

/// Training state of one instance; Algorithm-level steps are methods.
class GmlTrainer {
 public:
  GmlTrainer(const SystemGeometry& g, GmlConfig c) : g_(g), c_(std::move(c)) {
    c_.validate();
    const NetworkDims dims = network_dims(g_, c_);
    bvn_ = mlp_init(dims.bvn[0], dims.bvn[1], dims.bvn[2], derive_seed(c_.seed, 1));
    ppn_ = mlp_init(dims.ppn[0], dims.ppn[1], dims.ppn[2], derive_seed(c_.seed, 2));
    for (double& v : bvn_.w2) v *= c_.output_init_scale;
    for (double& v : ppn_.w2) v *= c_.output_init_scale;
    if (c_.init == NetInit::GradientFollowing) {
      const int K = static_cast<int>(g_.user_count());
      const int Ni = c_.inner_iterations;
      const double span = Ni > 1 ? 1.0 / (Ni - 1) : 1.0;
      seed_scheduled_follower(bvn_, 2 * K, 2 * K + 1, Ni, c_.follow_gain_w, std::pow(c_.follow_shrink_w, span));
      if (c_.ppn_wiring == PpnWiring::PerWaveguide) {
        seed_scheduled_follower(ppn_, dims.ppn[2], dims.ppn[0] - 1, Ni, c_.follow_gain_p,
                                std::pow(c_.follow_shrink_p, span));
      } else {
        seed_gradient_follower(ppn_, dims.ppn[2], c_.follow_gain_p);
      }
    }
    adam_bvn_ = AdamState::for_params(bvn_, c_.lr_w);
    adam_ppn_ = AdamState::for_params(ppn_, c_.lr_p);
    p0_ = equidistant_positions(g_);
    w0_ = initial_beamforming(g_, p0_, derive_seed(c_.seed, 3));
    p_star_ = p0_;
    result_.best_w = w0_;
    result_.best_p = p0_;
    result_.best_report = sum_rate(effective_channels(g_, p0_), w0_, g_.noise_power, g_.rate_threshold);
    result_.best_sum_rate = result_.best_report.sum_rate;
  }

  MlpParams& bvn() { return bvn_; }
  MlpParams& ppn() { return ppn_; }
  const BeamformingState& initial_w() const { return w0_; }
  const PinchingState& initial_p() const { return p0_; }
  const PinchingState& conditioning_positions() const { return p_star_; }
  const GmlConfig& config() const { return c_; }

  struct OuterOutcome {
    Candidate candidate;
    LossBreakdown loss;
    std::vector<double> grad_bvn;
    std::vector<double> grad_ppn;
  };

  /// Runs one outer iteration on a fresh tape and returns the candidate, its
  /// loss and the loss gradient with respect to both networks.
  OuterOutcome outer_step() {
    ad::Tape& tape = tape_;
    tape.clear();
    ad::Tape::Scope scope(tape);
    const BasicMlp<ad::Var> bvn = on_tape(bvn_, tape);
    const BasicMlp<ad::Var> ppn = on_tape(ppn_, tape);
    const int Ni = c_.inner_iterations;
    auto keep_graph = [&](int i) { return c_.truncation == 0 || i >= Ni - c_.truncation; };

    const BasicChannel<ad::Var> a_star = lift<ad::Var>(effective_channels(g_, p_star_));
    BasicBeamforming<ad::Var> W = lift<ad::Var>(w0_);
    for (int i = 0; i < Ni; ++i) {
      if (!keep_graph(i)) W = detach(W);
      W = inner_update_W(g_, W, a_star, bvn, {i, Ni, &result_.skipped_updates}, c_.bvn_step);
    }
    BasicPinching<ad::Var> P = lift<ad::Var>(p0_);
    for (int i = 0; i < Ni; ++i) {
      if (!keep_graph(i)) P = detach(P);
      P = inner_update_P(g_, W, P, ppn, {i, Ni, &result_.skipped_updates}, c_.ppn_wiring,
                        c_.ppn_reach > 0.0 ? c_.ppn_reach : g_.guided_wavelength);
    }
    const BasicBeamforming<ad::Var> Wn = normalize_power(W, g_.power_budget);
    const BasicLoss<ad::Var> loss = meta_loss(g_, Wn, P, c_);

    OuterOutcome out;
    out.loss = value_of(loss);
    std::vector<ad::Var> theta = bvn.flatten();
    const std::size_t n_bvn = theta.size();
    const std::vector<ad::Var> theta_p = ppn.flatten();
    theta.insert(theta.end(), theta_p.begin(), theta_p.end());
    const std::vector<double> grad = tape.gradient(loss.total, theta);
    out.grad_bvn.assign(grad.begin(), grad.begin() + static_cast<std::ptrdiff_t>(n_bvn));
    out.grad_ppn.assign(grad.begin() + static_cast<std::ptrdiff_t>(n_bvn), grad.end());

    const PinchingState p_values = values(P);
    out.candidate = assess_candidate(g_, values(Wn), p_values);
    p_star_ = p_values;
    return out;
  }

  /// Outer iteration plus bookkeeping: loss accumulation and best tracking.
  LossBreakdown run_outer_iteration() {
    OuterOutcome o = outer_step();
    if (epoch_grad_bvn_.empty()) {
      epoch_grad_bvn_.assign(o.grad_bvn.size(), 0.0);
      epoch_grad_ppn_.assign(o.grad_ppn.size(), 0.0);
    }
    for (std::size_t i = 0; i < o.grad_bvn.size(); ++i) epoch_grad_bvn_[i] += o.grad_bvn[i];
    for (std::size_t i = 0; i < o.grad_ppn.size(); ++i) epoch_grad_ppn_[i] += o.grad_ppn[i];
    epoch_loss_ += o.loss.total;

    const double rate = o.candidate.report.sum_rate;
    if (o.candidate.feasible && (!result_.found_feasible || rate > result_.best_sum_rate)) {
      result_.found_feasible = true;
      result_.best_sum_rate = rate;
      result_.best_w = o.candidate.w;
      result_.best_p = o.candidate.p;
      result_.best_report = o.candidate.report;
    }
    TraceEntry t;
    t.epoch = epoch_;
    t.outer = outer_;
    t.loss = o.loss;
    t.sum_rate = rate;
    t.feasible = o.candidate.feasible;
    t.best_so_far = result_.found_feasible ? result_.best_sum_rate : 0.0;
    result_.trace.push_back(t);
    ++outer_;
    return o.loss;
  }

  /// N_o outer iterations, loss averaging and one Adam step per network.
  /// Returns the averaged epoch loss.
  double run_epoch() {
    epoch_loss_ = 0.0;
    epoch_grad_bvn_.clear();
    epoch_grad_ppn_.clear();
    outer_ = 0;
    for (int j = 0; j < c_.outer_iterations; ++j) run_outer_iteration();
    const double inv = 1.0 / c_.outer_iterations;
    const double mean_loss = epoch_loss_ * inv;
    if (!std::isfinite(mean_loss)) {
      throw NumericalError("gml: non-finite epoch loss in epoch " + std::to_string(epoch_));
    }
    for (double& v : epoch_grad_bvn_) v *= inv;
    for (double& v : epoch_grad_ppn_) v *= inv;
    if (adam_step(adam_bvn_, bvn_, epoch_grad_bvn_) != AdamOutcome::Applied) ++result_.skipped_adam_steps;
    if (adam_step(adam_ppn_, ppn_, epoch_grad_ppn_) != AdamOutcome::Applied) ++result_.skipped_adam_steps;
    ++epoch_;
    return mean_loss;
  }

  TrainResult train() {
    for (int e = 0; e < c_.epochs; ++e) run_epoch();
    return result();
  }

  TrainResult result() const {
    TrainResult r = result_;
    r.bvn = bvn_;
    r.ppn = ppn_;
    return r;
  }

 private:
  SystemGeometry g_;
  GmlConfig c_;
  ad::Tape tape_;  // reused across outer iterations to keep its capacity
  MlpParams bvn_;
  MlpParams ppn_;
  AdamState adam_bvn_;
  AdamState adam_ppn_;
  BeamformingState w0_;
  PinchingState p0_;
  PinchingState p_star_;
  TrainResult result_;
  std::vector<double> epoch_grad_bvn_;
  std::vector<double> epoch_grad_ppn_;
  double epoch_loss_ = 0.0;
  int epoch_ = 0;
  int outer_ = 0;
};

inline TrainResult train(const SystemGeometry& g, const GmlConfig& c) {
  GmlTrainer trainer(g, c);
  return trainer.train();
}

}  // namespace pinchcomp
