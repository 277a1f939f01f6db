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

// Physical layout of the two-BS pinching-antenna system and the PA placement
// constraints (minimum spacing, operating range along the waveguide).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pinchcomp {

inline constexpr int kBsCount = 2;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

inline double distance(const Point3& a, const Point3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) + (a.z - b.z) * (a.z - b.z));
}

enum class FeedSide { Left, Right };

inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watt_to_dbm(double watt) { return 10.0 * std::log10(watt) + 30.0; }

/// Geometry inputs as they appear in an experiment configuration.
/// Unset optionals take the documented defaults in build_geometry.
struct GeometryConfig {
  double span = 80.0;
  int waveguides_per_bs = 2;
  int pas_per_waveguide = 4;
  std::array<double, kBsCount> heights{10.0, 15.0};
  std::vector<double> y_offsets;  // empty: evenly spaced i*D/(N+1)
  std::array<FeedSide, kBsCount> feed_side{FeedSide::Left, FeedSide::Left};
  int users = 2;
  std::vector<std::array<double, 2>> user_positions;  // empty: sampled with user_seed
  std::uint64_t user_seed = 42;
  double wavelength = 0.01;
  double n_eff = 1.4;
  std::optional<double> min_spacing;  // default wavelength / 2
  std::optional<double> eta;          // default wavelength / (4 pi)
  std::optional<double> delta_eq;     // default 1 / P_n
  double noise_density_dbm_hz = -173.0;
  double bandwidth_hz = 1e6;
  std::array<double, kBsCount> power_dbm{18.0, 18.0};
  double rate_threshold = 0.2;
};

struct Waveguide {
  double y = 0.0;
  double height = 0.0;
  double span = 0.0;
  int pa_count = 0;
  FeedSide feed = FeedSide::Left;
};

struct SystemGeometry {
  std::array<std::vector<Waveguide>, kBsCount> waveguides;
  std::vector<Point3> users;
  double wavelength = 0.0;
  double n_eff = 1.0;
  double guided_wavelength = 0.0;
  double min_spacing = 0.0;
  double eta = 0.0;
  double delta_eq = 0.0;
  double noise_power = 0.0;
  std::array<double, kBsCount> power_budget{};
  double rate_threshold = 0.0;

  std::size_t user_count() const { return users.size(); }
  std::size_t waveguide_count(int bs) const { return waveguides.at(static_cast<std::size_t>(bs)).size(); }
  const Waveguide& waveguide(int bs, std::size_t n) const {
    return waveguides.at(static_cast<std::size_t>(bs)).at(n);
  }
  /// Side length of the square service area.
  double service_span() const {
    double d = 0.0;
    for (const auto& list : waveguides)
      for (const auto& w : list) d = std::max(d, w.span);
    return d;
  }
};

/// x-coordinates of every PA, indexed [bs][waveguide][pa].
template <class T>
struct BasicPinching {
  std::array<std::vector<std::vector<T>>, kBsCount> x;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& bs : x)
      for (const auto& wg : bs) n += wg.size();
    return n;
  }
};
using PinchingState = BasicPinching<double>;

/// Uniform user drop over the D x D service rectangle.
inline std::vector<Point3> sample_users(int count, double span, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, span);
  std::vector<Point3> users;
  users.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const double x = u(rng);
    const double y = u(rng);
    users.push_back({x, y, 0.0});
  }
  return users;
}

inline SystemGeometry build_geometry(const GeometryConfig& c) {
  if (!(c.span > 0.0)) throw std::invalid_argument("geometry: span must be positive");
  if (c.waveguides_per_bs < 1) throw std::invalid_argument("geometry: waveguides_per_bs must be >= 1");
  if (c.pas_per_waveguide < 1) throw std::invalid_argument("geometry: pas_per_waveguide must be >= 1");
  if (c.users < 1) throw std::invalid_argument("geometry: at least one user is required");
  for (double h : c.heights)
    if (!(h > 0.0)) throw std::invalid_argument("geometry: heights must be positive");
  if (!(c.wavelength > 0.0)) throw std::invalid_argument("geometry: wavelength must be positive");
  if (!(c.n_eff >= 1.0)) throw std::invalid_argument("geometry: n_eff must be >= 1");
  if (!(c.bandwidth_hz > 0.0)) throw std::invalid_argument("geometry: bandwidth must be positive");

  SystemGeometry g;
  g.wavelength = c.wavelength;
  g.n_eff = c.n_eff;
  g.guided_wavelength = c.wavelength / c.n_eff;
  g.min_spacing = c.min_spacing.value_or(c.wavelength / 2.0);
  g.eta = c.eta.value_or(c.wavelength / (4.0 * std::numbers::pi));
  g.delta_eq = c.delta_eq.value_or(1.0 / c.pas_per_waveguide);
  if (!(g.delta_eq > 0.0) || g.delta_eq > 1.0 / c.pas_per_waveguide + 1e-15) {
    throw std::invalid_argument("geometry: delta_eq must lie in (0, 1/P_n]");
  }
  if (g.min_spacing < 0.0) throw std::invalid_argument("geometry: min_spacing must be non-negative");
  if (!(g.eta > 0.0)) throw std::invalid_argument("geometry: eta must be positive");
  g.noise_power = dbm_to_watt(c.noise_density_dbm_hz + 10.0 * std::log10(c.bandwidth_hz));
  for (int b = 0; b < kBsCount; ++b) g.power_budget[static_cast<std::size_t>(b)] = dbm_to_watt(c.power_dbm[static_cast<std::size_t>(b)]);
  g.rate_threshold = c.rate_threshold;

  const auto n_wg = static_cast<std::size_t>(c.waveguides_per_bs);
  std::vector<double> ys = c.y_offsets;
  if (ys.empty()) {
    for (std::size_t i = 1; i <= n_wg; ++i) ys.push_back(static_cast<double>(i) * c.span / static_cast<double>(n_wg + 1));
  }
  if (ys.size() != n_wg) throw std::invalid_argument("geometry: y_offsets must list one value per waveguide");

  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (std::size_t n = 0; n < n_wg; ++n) {
      g.waveguides[b].push_back(Waveguide{ys[n], c.heights[b], c.span, c.pas_per_waveguide, c.feed_side[b]});
    }
  }

  if (c.user_positions.empty()) {
    g.users = sample_users(c.users, c.span, c.user_seed);
  } else {
    if (c.user_positions.size() != static_cast<std::size_t>(c.users)) {
      throw std::invalid_argument("geometry: user_positions must list exactly `users` entries");
    }
    for (const auto& p : c.user_positions) {
      if (p[0] < 0.0 || p[0] > c.span || p[1] < 0.0 || p[1] > c.span) {
        throw std::invalid_argument("geometry: user outside the service area");
      }
      g.users.push_back({p[0], p[1], 0.0});
    }
  }
  return g;
}

/// Empty pinching state shaped after the geometry, all positions at 0.
inline PinchingState zero_positions(const SystemGeometry& g) {
  PinchingState p;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (const auto& wg : g.waveguides[b]) p.x[b].emplace_back(static_cast<std::size_t>(wg.pa_count), 0.0);
  }
  return p;
}

inline void check_shape(const SystemGeometry& g, const PinchingState& p) {
  for (std::size_t b = 0; b < kBsCount; ++b) {
    if (p.x[b].size() != g.waveguides[b].size()) throw std::invalid_argument("pinching state: waveguide count mismatch");
    for (std::size_t n = 0; n < p.x[b].size(); ++n) {
      if (p.x[b][n].size() != static_cast<std::size_t>(g.waveguides[b][n].pa_count)) {
        throw std::invalid_argument("pinching state: PA count mismatch");
      }
    }
  }
}

/// [x, y_n, A_b] of one PA.
inline Point3 pa_coordinates(const SystemGeometry& g, const PinchingState& p, int bs, std::size_t waveguide,
                             std::size_t pa) {
  if (bs < 0 || bs >= kBsCount) throw std::out_of_range("pa_coordinates: bs index");
  const auto b = static_cast<std::size_t>(bs);
  if (waveguide >= g.waveguides[b].size() || waveguide >= p.x[b].size()) {
    throw std::out_of_range("pa_coordinates: waveguide index");
  }
  if (pa >= p.x[b][waveguide].size()) throw std::out_of_range("pa_coordinates: pa index");
  const Waveguide& w = g.waveguides[b][waveguide];
  return {p.x[b][waveguide][pa], w.y, w.height};
}

struct SpacingViolation {
  int bs;
  std::size_t waveguide;
  std::size_t p;
  std::size_t q;  // p < q
  double deficit;
};

struct RangeViolation {
  int bs;
  std::size_t waveguide;
  std::size_t pa;
  double overshoot;
};

/// One entry per unordered PA pair closer than the minimum spacing.
inline std::vector<SpacingViolation> spacing_violations(const SystemGeometry& g, const PinchingState& p) {
  std::vector<SpacingViolation> out;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (std::size_t n = 0; n < p.x[b].size(); ++n) {
      const auto& xs = p.x[b][n];
      for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = i + 1; j < xs.size(); ++j) {
          const double gap = std::abs(xs[i] - xs[j]);
          if (gap < g.min_spacing) out.push_back({static_cast<int>(b), n, i, j, g.min_spacing - gap});
        }
      }
    }
  }
  return out;
}

/// Every PA outside its waveguide's closed interval [0, D_n].
inline std::vector<RangeViolation> range_violations(const SystemGeometry& g, const PinchingState& p) {
  std::vector<RangeViolation> out;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    for (std::size_t n = 0; n < p.x[b].size(); ++n) {
      const double span = g.waveguides[b].at(n).span;
      for (std::size_t i = 0; i < p.x[b][n].size(); ++i) {
        const double x = p.x[b][n][i];
        if (x < 0.0) out.push_back({static_cast<int>(b), n, i, -x});
        if (x > span) out.push_back({static_cast<int>(b), n, i, x - span});
      }
    }
  }
  return out;
}

inline bool placement_feasible(const SystemGeometry& g, const PinchingState& p) {
  return spacing_violations(g, p).empty() && range_violations(g, p).empty();
}

}  // namespace pinchcomp
