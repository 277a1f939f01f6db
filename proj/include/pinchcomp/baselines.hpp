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

// Comparison schemes: equidistant pinching, WDMA, fixed ULAs, and the
// multi-start projected-gradient reference optimizer.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "pinchcomp/autodiff.hpp"
#include "pinchcomp/channel.hpp"
#include "pinchcomp/geometry.hpp"
#include "pinchcomp/gml.hpp"
#include "pinchcomp/rate.hpp"

namespace pinchcomp {

enum class Scheme { Gml, Oracle, Equidistant, Wdma, Ula };

inline std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Gml: return "gml";
    case Scheme::Oracle: return "oracle";
    case Scheme::Equidistant: return "equidistant";
    case Scheme::Wdma: return "wdma";
    case Scheme::Ula: return "ula";
  }
  return "unknown";
}

inline Scheme scheme_from_name(const std::string& s) {
  for (Scheme x : {Scheme::Gml, Scheme::Oracle, Scheme::Equidistant, Scheme::Wdma, Scheme::Ula}) {
    if (scheme_name(x) == s) return x;
  }
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

struct BaselineResult {
  Scheme scheme = Scheme::Oracle;
  BeamformingState w;
  std::optional<PinchingState> p;           // absent for the ULA scheme
  std::optional<WdmaAssignment> assignment;  // WDMA only
  RateReport report;
  bool power_feasible = false;
  bool placement_feasible = true;

  double sum_rate() const { return report.sum_rate; }
  bool qos_feasible() const { return report.all_qos(); }
};

// ---------------------------------------------------------------------------
// Projections

/// Clamps every PA into [0, D] and pushes neighbours apart to the minimum
/// spacing with the least displacement a greedy sweep finds. PA order within a
/// waveguide is not preserved; the channel does not depend on it.
inline PinchingState project_positions(const SystemGeometry& g, PinchingState p) {
  const double ds = g.min_spacing * (1.0 + 1e-6) + 1e-12;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (std::size_t n = 0; n < p.x[b].size(); ++n) {
      auto& xs = p.x[b][n];
      const double span = g.waveguides[b][n].span;
      if (xs.empty()) continue;
      if (ds * static_cast<double>(xs.size() - 1) > span) {
        throw std::invalid_argument("project_positions: waveguide too short for the minimum spacing");
      }
      for (double& x : xs) x = std::clamp(x, 0.0, span);
      std::sort(xs.begin(), xs.end());
      for (std::size_t i = 1; i < xs.size(); ++i) xs[i] = std::max(xs[i], xs[i - 1] + ds);
      xs.back() = std::min(xs.back(), span);
      for (std::size_t i = xs.size() - 1; i-- > 0;) xs[i] = std::min(xs[i], xs[i + 1] - ds);
    }
  }
  return p;
}

// ---------------------------------------------------------------------------
// Projected gradient ascent

struct PgaSettings {
  int restarts = 16;
  int steps = 500;
  double step_size = 0.1;  // initial step, in units of the block's natural scale
  std::uint64_t seed = 1;
};

namespace detail {

inline double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace detail

inline BaselineResult make_result(const SystemGeometry& g, Scheme scheme, const EffectiveChannel& a,
                                  BeamformingState W, std::optional<PinchingState> p) {
  BaselineResult r;
  r.scheme = scheme;
  r.report = sum_rate(a, W, g.noise_power, g.rate_threshold);
  r.power_feasible = power_check(W, g.power_budget).feasible;
  r.placement_feasible = !p || placement_feasible(g, *p);
  r.w = std::move(W);
  r.p = std::move(p);
  return r;
}

/// Uniformly random PA positions, projected onto the feasible set.
inline PinchingState random_positions(const SystemGeometry& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PinchingState p;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (const auto& wg : g.waveguides[b]) {
      std::uniform_real_distribution<double> u(0.0, wg.span);
      std::vector<double> xs;
      for (int i = 0; i < wg.pa_count; ++i) xs.push_back(u(rng));
      p.x[b].push_back(std::move(xs));
    }
  }
  return project_positions(g, std::move(p));
}

namespace detail {

/// Joint variables in natural units: beams over sqrt(P_BS), positions over
/// the guided wavelength.
struct JointScaling {
  std::array<double, kBsCount> beam;
  double position;
};

inline JointScaling joint_scaling(const SystemGeometry& g) {
  return {{std::sqrt(g.power_budget[0]), std::sqrt(g.power_budget[1])}, g.guided_wavelength};
}

inline std::vector<double> pack(const BeamformingState& W, const PinchingState& P, const JointScaling& s) {
  std::vector<double> z;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (const auto& c : W.w[b].data) {
      z.push_back(c.re / s.beam[b]);
      z.push_back(c.im / s.beam[b]);
    }
  }
  for (const auto& bs : P.x)
    for (const auto& wg : bs)
      for (double x : wg) z.push_back(x / s.position);
  return z;
}

inline void unpack(const std::vector<double>& z, const JointScaling& s, BeamformingState& W, PinchingState& P) {
  std::size_t i = 0;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (auto& c : W.w[b].data) {
      c.re = z[i++] * s.beam[b];
      c.im = z[i++] * s.beam[b];
    }
  }
  for (auto& bs : P.x)
    for (auto& wg : bs)
      for (double& x : wg) x = z[i++] * s.position;
}

/// Sum rate after power normalisation, and its gradient in scaled variables.
inline double joint_objective(const SystemGeometry& g, const std::vector<double>& z, const JointScaling& s,
                              BeamformingState W, PinchingState P, std::vector<double>* grad) {
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  std::vector<ad::Var> leaves;
  leaves.reserve(z.size());
  for (double v : z) leaves.push_back(tape.variable(v));
  BasicBeamforming<ad::Var> Wv = lift<ad::Var>(W);
  BasicPinching<ad::Var> Pv = lift<ad::Var>(P);
  std::size_t i = 0;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (auto& c : Wv.w[b].data) {
      c.re = leaves[i++] * s.beam[b];
      c.im = leaves[i++] * s.beam[b];
    }
  }
  for (auto& bs : Pv.x)
    for (auto& wg : bs)
      for (auto& x : wg) x = leaves[i++] * s.position;
  const ad::Var r = sum_rate_value(effective_channels(g, Pv), normalize_power(Wv, g.power_budget), g.noise_power);
  if (grad != nullptr) *grad = tape.gradient(r, leaves);
  return r.value();
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace detail

namespace detail {

/// Projected ascent with limited-memory quasi-Newton directions. `objective`
/// returns the value at z and writes its gradient; `project` maps z onto the
/// feasible set in place and returns the largest coordinate it moved. Every
/// trial point is projected and the step is halved until the objective does
/// not decrease. Returns the final (feasible) point.
template <class Objective, class Project>
std::vector<double> projected_lbfgs(std::vector<double> z, const Objective& objective, const Project& project,
                                    int steps, double step_size) {
  constexpr std::size_t kMemory = 10;
  constexpr int kMaxHalvings = 40;
  project(z);
  std::vector<double> grad;
  double f = objective(z, grad);
  std::vector<std::vector<double>> s_hist;
  std::vector<std::vector<double>> y_hist;

  for (int it = 0; it < steps; ++it) {
    if (!std::isfinite(f) || norm(grad) == 0.0) break;
    // Two-loop recursion on the negated objective; d is an ascent direction.
    std::vector<double> d = grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t m = s_hist.size(); m-- > 0;) {
      alpha[m] = dot(s_hist[m], d) / dot(y_hist[m], s_hist[m]);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= alpha[m] * y_hist[m][i];
    }
    double gamma = step_size / norm(grad);
    if (!s_hist.empty()) gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
    for (double& v : d) v *= gamma;
    for (std::size_t m = 0; m < s_hist.size(); ++m) {
      const double beta = dot(y_hist[m], d) / dot(y_hist[m], s_hist[m]);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += (alpha[m] - beta) * s_hist[m][i];
    }
    if (!(dot(d, grad) > 0.0)) {
      s_hist.clear();
      y_hist.clear();
      d = grad;
      for (double& v : d) v *= step_size / norm(grad);
    }

    bool accepted = false;
    double t = 1.0;
    for (int h = 0; h < kMaxHalvings; ++h, t *= 0.5) {
      std::vector<double> trial(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) trial[i] = z[i] + t * d[i];
      const double moved = project(trial);
      std::vector<double> trial_grad;
      const double ft = objective(trial, trial_grad);
      if (!std::isfinite(ft) || ft < f) continue;
      std::vector<double> sv(z.size());
      std::vector<double> yv(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) {
        sv[i] = trial[i] - z[i];
        yv[i] = grad[i] - trial_grad[i];
      }
      // A binding projection invalidates the curvature pairs.
      if (moved > 1e-9 * (1.0 + t * norm(d))) {
        s_hist.clear();
        y_hist.clear();
      } else if (dot(sv, yv) > 1e-16 * dot(yv, yv) && dot(sv, yv) > 0.0) {
        s_hist.push_back(std::move(sv));
        y_hist.push_back(std::move(yv));
        if (s_hist.size() > kMemory) {
          s_hist.erase(s_hist.begin());
          y_hist.erase(y_hist.begin());
        }
      }
      const bool progressed = ft > f;
      z = std::move(trial);
      grad = std::move(trial_grad);
      f = ft;
      accepted = progressed;
      break;
    }
    if (!accepted) {
      if (s_hist.empty()) break;
      s_hist.clear();
      y_hist.clear();
    }
  }
  return z;
}

inline double max_moved(const std::vector<double>& before, const std::vector<double>& after) {
  double moved = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) moved = std::max(moved, std::abs(after[i] - before[i]));
  return moved;
}

}  // namespace detail

/// Joint projected ascent over beams and positions from one starting point.
inline std::pair<BeamformingState, PinchingState> pga_single(const SystemGeometry& g, BeamformingState W,
                                                             PinchingState P, int steps, double step_size) {
  const detail::JointScaling sc = detail::joint_scaling(g);
  auto project = [&](std::vector<double>& v) {
    detail::unpack(v, sc, W, P);
    W = normalize_power(W, g.power_budget);
    P = project_positions(g, P);
    std::vector<double> out = detail::pack(W, P, sc);
    const double moved = detail::max_moved(v, out);
    v = std::move(out);
    return moved;
  };
  auto objective = [&](const std::vector<double>& v, std::vector<double>& grad) {
    return detail::joint_objective(g, v, sc, W, P, &grad);
  };
  const std::vector<double> z = detail::projected_lbfgs(detail::pack(W, P, sc), objective, project, steps, step_size);
  detail::unpack(z, sc, W, P);
  return {normalize_power(W, g.power_budget), project_positions(g, std::move(P))};
}

/// Beamforming-only projected ascent over a fixed channel.
inline BeamformingState optimize_beams(const EffectiveChannel& a, BeamformingState W,
                                       const std::array<double, kBsCount>& budgets, double noise, int steps,
                                       double step_size) {
  const std::array<double, kBsCount> scale{std::sqrt(budgets[0]), std::sqrt(budgets[1])};
  auto to_state = [&](const std::vector<double>& v) {
    std::size_t i = 0;
    for (std::size_t b = 0; b < kBsCount; ++b) {
      for (auto& c : W.w[b].data) {
        c.re = v[i++] * scale[b];
        c.im = v[i++] * scale[b];
      }
    }
  };
  auto to_vector = [&] {
    std::vector<double> v;
    for (std::size_t b = 0; b < kBsCount; ++b) {
      for (const auto& c : W.w[b].data) {
        v.push_back(c.re / scale[b]);
        v.push_back(c.im / scale[b]);
      }
    }
    return v;
  };
  auto project = [&](std::vector<double>& v) {
    to_state(v);
    W = normalize_power(W, budgets);
    std::vector<double> out = to_vector();
    const double moved = detail::max_moved(v, out);
    v = std::move(out);
    return moved;
  };
  auto objective = [&](const std::vector<double>& v, std::vector<double>& grad) {
    ad::Tape tape;
    ad::Tape::Scope scope(tape);
    std::vector<ad::Var> leaves;
    leaves.reserve(v.size());
    for (double x : v) leaves.push_back(tape.variable(x));
    BasicBeamforming<ad::Var> Wv = lift<ad::Var>(W);
    std::size_t i = 0;
    for (std::size_t b = 0; b < kBsCount; ++b) {
      for (auto& c : Wv.w[b].data) {
        c.re = leaves[i++] * scale[b];
        c.im = leaves[i++] * scale[b];
      }
    }
    const ad::Var r = sum_rate_value(lift<ad::Var>(a), normalize_power(Wv, budgets), noise);
    grad = tape.gradient(r, leaves);
    return r.value();
  };
  W = normalize_power(W, budgets);
  to_state(detail::projected_lbfgs(to_vector(), objective, project, steps, step_size));
  return normalize_power(W, budgets);
}

/// Multi-start projected gradient ascent on the sum rate over beams and
/// positions. Restart 0 starts from (P_init, W_init); restart r > 0 from a
/// seed-derived random point. Returns the best feasible result.
inline BaselineResult pga_oracle(const SystemGeometry& g, const PinchingState& p_init, const BeamformingState& w_init,
                                 const PgaSettings& s) {
  if (s.restarts < 1) throw std::invalid_argument("pga_oracle: restarts must be >= 1");
  std::optional<BaselineResult> best;
  for (int r = 0; r < s.restarts; ++r) {
    PinchingState p0 = r == 0 ? p_init : random_positions(g, derive_seed(s.seed, 100 + static_cast<std::uint64_t>(r)));
    BeamformingState w0 = r == 0 ? w_init : initial_beamforming(g, p0, derive_seed(s.seed, 200 + static_cast<std::uint64_t>(r)));
    auto [w, p] = pga_single(g, std::move(w0), std::move(p0), s.steps, s.step_size);
    const EffectiveChannel a = effective_channels(g, p);
    BaselineResult res = make_result(g, Scheme::Oracle, a, std::move(w), std::move(p));
    if (!res.power_feasible || !res.placement_feasible) continue;
    if (!best || res.sum_rate() > best->sum_rate()) best = std::move(res);
  }
  if (!best) throw std::runtime_error("pga_oracle: no feasible restart");
  return *best;
}

/// Equidistant PAs with beams optimised by projected gradient ascent.
inline BaselineResult equidistant_optimize(const SystemGeometry& g, const PgaSettings& s) {
  const PinchingState p = equidistant_positions(g);
  const EffectiveChannel a = effective_channels(g, p);
  std::optional<BaselineResult> best;
  for (int r = 0; r < s.restarts; ++r) {
    BeamformingState w0 = initial_beamforming(g, p, derive_seed(s.seed, 300 + static_cast<std::uint64_t>(r)));
    BeamformingState w = optimize_beams(a, std::move(w0), g.power_budget, g.noise_power, s.steps, s.step_size);
    BaselineResult res = make_result(g, Scheme::Equidistant, a, std::move(w), p);
    if (!best || res.sum_rate() > best->sum_rate()) best = std::move(res);
  }
  return *best;
}

// ---------------------------------------------------------------------------
// WDMA

/// Greedy max-gain matching per BS: users in descending order of their best
/// waveguide gain each take their strongest free waveguide. Ties go to the
/// lower waveguide (and user) index.
inline WdmaAssignment wdma_assign(const SystemGeometry& g, const PinchingState& p) {
  const std::size_t K = g.user_count();
  const EffectiveChannel a = effective_channels(g, p);
  WdmaAssignment out(K);
  for (int b = 0; b < kBsCount; ++b) {
    const std::size_t N = g.waveguide_count(b);
    if (K > N) throw std::invalid_argument("wdma_assign: more users than waveguides");
    std::vector<std::size_t> order(K);
    std::vector<double> best_gain(K, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      order[k] = k;
      for (const auto& z : a.row(k, b)) best_gain[k] = std::max(best_gain[k], norm2(z));
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return best_gain[i] > best_gain[j]; });
    std::vector<bool> taken(N, false);
    for (std::size_t k : order) {
      std::size_t pick = N;
      double gain = -1.0;
      for (std::size_t n = 0; n < N; ++n) {
        if (taken[n]) continue;
        const double v = norm2(a.row(k, b)[n]);
        if (v > gain) {
          gain = v;
          pick = n;
        }
      }
      taken[pick] = true;
      out[k][static_cast<std::size_t>(b)] = pick;
    }
  }
  return out;
}

/// Equal split of each BS's budget over its waveguides.
inline WaveguidePowers equal_powers(const SystemGeometry& g) {
  WaveguidePowers p;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    const double n = static_cast<double>(g.waveguides[b].size());
    p[b].assign(g.waveguides[b].size(), g.power_budget[b] / n);
  }
  return p;
}

namespace detail {

/// WDMA sum rate on the tape, as a function of positions.
inline ad::Var wdma_sum_rate(const SystemGeometry& g, const BasicPinching<ad::Var>& P, const WdmaAssignment& asg,
                             const WaveguidePowers& powers) {
  const BasicChannel<ad::Var> a = effective_channels(g, P);
  const std::size_t K = g.user_count();
  // Co-phased beams built from the same channel: w = sqrt(p) conj(a) / |a|.
  BasicBeamforming<ad::Var> W;
  for (std::size_t b = 0; b < kBsCount; ++b) W.w[b] = CMatrix<ad::Var>(powers[b].size(), K);
  for (std::size_t k = 0; k < K; ++k) {
    for (int b = 0; b < kBsCount; ++b) {
      const auto bb = static_cast<std::size_t>(b);
      const std::size_t n = asg[k][bb];
      const Cplx<ad::Var>& z = a.row(k, b)[n];
      const ad::Var scale = ad::Var(std::sqrt(powers[bb][n])) / ad::sqrt(norm2(z));
      W.w[bb](n, k) = Cplx<ad::Var>(scale * z.re, ad::Var(0.0) - scale * z.im);
    }
  }
  return sum_rate_value(a, W, g.noise_power);
}

}  // namespace detail

/// WDMA benchmark: greedy assignment, equal power split, PA positions tuned
/// by projected gradient ascent on the WDMA sum rate (multi-start).
inline BaselineResult wdma_optimize(const SystemGeometry& g, const PgaSettings& s) {
  const WaveguidePowers powers = equal_powers(g);
  std::optional<BaselineResult> best;
  for (int r = 0; r < s.restarts; ++r) {
    PinchingState P = r == 0 ? equidistant_positions(g)
                             : random_positions(g, derive_seed(s.seed, 400 + static_cast<std::uint64_t>(r)));
    const WdmaAssignment asg = wdma_assign(g, P);
    const double unit = g.guided_wavelength;
    auto to_state = [&](const std::vector<double>& v) {
      std::size_t i = 0;
      for (auto& bs : P.x)
        for (auto& wg : bs)
          for (double& x : wg) x = v[i++] * unit;
    };
    auto to_vector = [&] {
      std::vector<double> v;
      for (const auto& bs : P.x)
        for (const auto& wg : bs)
          for (double x : wg) v.push_back(x / unit);
      return v;
    };
    auto project = [&](std::vector<double>& v) {
      to_state(v);
      P = project_positions(g, P);
      std::vector<double> out = to_vector();
      const double moved = detail::max_moved(v, out);
      v = std::move(out);
      return moved;
    };
    auto objective = [&](const std::vector<double>& v, std::vector<double>& grad) {
      ad::Tape tape;
      ad::Tape::Scope scope(tape);
      BasicPinching<ad::Var> Pv = lift<ad::Var>(P);
      std::vector<ad::Var> leaves;
      std::size_t i = 0;
      for (auto& bs : Pv.x)
        for (auto& wg : bs)
          for (auto& x : wg) {
            const ad::Var leaf = tape.variable(v[i++]);
            leaves.push_back(leaf);
            x = leaf * unit;
          }
      const ad::Var r = detail::wdma_sum_rate(g, Pv, asg, powers);
      grad = tape.gradient(r, leaves);
      return r.value();
    };
    to_state(detail::projected_lbfgs(to_vector(), objective, project, s.steps, s.step_size));
    P = project_positions(g, P);
    const EffectiveChannel a = effective_channels(g, P);
    BaselineResult res = make_result(g, Scheme::Wdma, a, wdma_beamforming(a, asg, powers), P);
    res.assignment = asg;
    if (!best || res.sum_rate() > best->sum_rate()) best = std::move(res);
  }
  return *best;
}

// ---------------------------------------------------------------------------
// Fixed ULAs

struct UlaSettings {
  double alpha = 3.9;
  double reference_gain = 1.0;
};

/// Channel rows of two colocated ULAs (N_b elements, lambda/2 spacing,
/// centred at (D/2, D/2, A_b)) in the same layout as the pinching channel.
inline EffectiveChannel ula_channels(const SystemGeometry& g, const UlaSettings& u) {
  const double centre = g.service_span() / 2.0;
  EffectiveChannel a;
  a.gains.resize(g.user_count());
  for (std::size_t k = 0; k < g.user_count(); ++k) {
    for (int b = 0; b < kBsCount; ++b) {
      const auto bb = static_cast<std::size_t>(b);
      const Point3 site{centre, centre, g.waveguides[bb].at(0).height};
      a.gains[k][bb] = ula_channel(site, static_cast<int>(g.waveguide_count(b)), g.wavelength / 2.0, g.users[k],
                                   g.wavelength, u.alpha, u.reference_gain);
    }
  }
  return a;
}

inline BaselineResult fixed_ula_optimize(const SystemGeometry& g, const PgaSettings& s, const UlaSettings& u) {
  const EffectiveChannel a = ula_channels(g, u);
  std::optional<BaselineResult> best;
  for (int r = 0; r < s.restarts; ++r) {
    std::mt19937_64 rng(derive_seed(s.seed, 500 + static_cast<std::uint64_t>(r)));
    std::normal_distribution<double> normal(0.0, 1.0);
    BeamformingState w = zero_beamforming(g);
    for (std::size_t b = 0; b < kBsCount; ++b) {
      for (std::size_t k = 0; k < g.user_count(); ++k) {
        const auto& row = a.row(k, static_cast<int>(b));
        for (std::size_t n = 0; n < row.size(); ++n) {
          w.w[b](n, k) = conj(row[n]) + Cplx<double>{normal(rng), normal(rng)} * Cplx<double>{std::sqrt(norm2(row[n])), 0.0};
        }
      }
      const double used = transmit_power(w.w[b]);
      const double f = std::sqrt(0.5 * g.power_budget[b] / used);
      for (auto& z : w.w[b].data) z = f * z;
    }
    w = optimize_beams(a, std::move(w), g.power_budget, g.noise_power, s.steps, s.step_size);
    BaselineResult res = make_result(g, Scheme::Ula, a, std::move(w), std::nullopt);
    if (!best || res.sum_rate() > best->sum_rate()) best = std::move(res);
  }
  return *best;
}

}  // namespace pinchcomp
