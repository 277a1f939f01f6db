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

// In-waveguide propagation, PA-to-user free-space propagation, and the
// per-user, per-BS effective channel row a_{k,b} that every rate expression
// consumes:
//
//   a_{k,b}[n] = sum_p sqrt(delta_eq) * (eta / d_{n,p,k})
//                      * exp(-j 2 pi (d_{n,p,k} / lambda + s_{n,p} / lambda_g))
//
// where s_{n,p} is the distance from the waveguide feed point to the PA.

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <type_traits>
#include <vector>

#include "pinchcomp/complex.hpp"
#include "pinchcomp/geometry.hpp"

namespace pinchcomp {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Phase accumulated between the feed point and a PA `x` meters downstream.
inline double waveguide_phase(double x, double guided_wavelength) { return kTwoPi * x / guided_wavelength; }

/// Physical (unconjugated) free-space entry (eta / d) * exp(-j 2 pi d / lambda).
inline Cplx<double> freespace_entry(const Point3& pa, const Point3& user, double wavelength, double eta) {
  const double d = distance(pa, user);
  if (!(d > 0.0)) throw std::domain_error("freespace_entry: PA and user coincide");
  return Cplx<double>::polar(eta / d, -kTwoPi * d / wavelength);
}

/// Channel rows indexed gains[user][bs][waveguide].
template <class T>
struct BasicChannel {
  std::vector<std::array<std::vector<Cplx<T>>, kBsCount>> gains;

  std::size_t user_count() const { return gains.size(); }
  const std::vector<Cplx<T>>& row(std::size_t k, int bs) const {
    return gains.at(k).at(static_cast<std::size_t>(bs));
  }
};
using EffectiveChannel = BasicChannel<double>;

template <class T>
T feed_distance(const Waveguide& w, const T& x) {
  return w.feed == FeedSide::Left ? x : T(w.span) - x;
}

/// a_{k,b}: one complex gain per waveguide of BS `bs` toward user `user`.
template <class T>
std::vector<Cplx<T>> effective_channel(const SystemGeometry& g, const BasicPinching<T>& p, std::size_t user,
                                       int bs) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const auto b = static_cast<std::size_t>(bs);
  if (bs < 0 || bs >= kBsCount || user >= g.users.size()) throw std::out_of_range("effective_channel: index");
  const Point3& u = g.users[user];
  const double amp0 = std::sqrt(g.delta_eq) * g.eta;
  const double k0 = kTwoPi / g.wavelength;
  const double kg = kTwoPi / g.guided_wavelength;

  std::vector<Cplx<T>> row;
  row.reserve(g.waveguides[b].size());
  for (std::size_t n = 0; n < g.waveguides[b].size(); ++n) {
    const Waveguide& w = g.waveguides[b][n];
    const double fixed2 = (w.y - u.y) * (w.y - u.y) + w.height * w.height;
    if (!(fixed2 > 0.0)) throw std::domain_error("effective_channel: PA and user coincide");
    Cplx<T> sum{T(0.0), T(0.0)};
    for (const T& x : p.x[b].at(n)) {
      if constexpr (std::is_same_v<T, double>) {
        // Phases reach ~1e5 rad; extended precision keeps the entry accurate
        // to near double rounding instead of phase-argument rounding.
        const long double dx = static_cast<long double>(x) - u.x;
        const long double dy = static_cast<long double>(w.y) - u.y;
        const long double d = std::sqrt(dx * dx + dy * dy + static_cast<long double>(w.height) * w.height);
        const long double along = w.feed == FeedSide::Left ? static_cast<long double>(x) : static_cast<long double>(w.span) - x;
        const long double cycles = d / g.wavelength + along / g.guided_wavelength;
        const long double phase = 2.0L * std::numbers::pi_v<long double> * (cycles - std::nearbyint(cycles));
        const long double amp = amp0 / d;
        sum += Cplx<double>(static_cast<double>(amp * std::cos(phase)), static_cast<double>(-amp * std::sin(phase)));
      } else {
        const T dx = x - T(u.x);
        const T d = sqrt(dx * dx + T(fixed2));
        const T phase = T(k0) * d + T(kg) * feed_distance(w, x);
        const T amp = T(amp0) / d;
        sum += Cplx<T>(amp * cos(phase), T(0.0) - amp * sin(phase));
      }
    }
    row.push_back(sum);
  }
  return row;
}

template <class T>
BasicChannel<T> effective_channels(const SystemGeometry& g, const BasicPinching<T>& p) {
  BasicChannel<T> a;
  a.gains.resize(g.users.size());
  for (std::size_t k = 0; k < g.users.size(); ++k) {
    for (int b = 0; b < kBsCount; ++b) a.gains[k][static_cast<std::size_t>(b)] = effective_channel(g, p, k, b);
  }
  return a;
}

/// Line-of-sight steering channel of a uniform linear array along x centred
/// at `bs_position`: entry m = gain * d_m^{-alpha/2} * exp(-j 2 pi d_m / lambda).
inline std::vector<Cplx<double>> ula_channel(const Point3& bs_position, int antenna_count, double spacing,
                                             const Point3& user, double wavelength, double alpha,
                                             double reference_gain = 1.0) {
  if (antenna_count < 1) throw std::invalid_argument("ula_channel: antenna_count must be >= 1");
  std::vector<Cplx<double>> h;
  h.reserve(static_cast<std::size_t>(antenna_count));
  const double centre = 0.5 * static_cast<double>(antenna_count - 1);
  for (int m = 0; m < antenna_count; ++m) {
    const Point3 element{bs_position.x + (static_cast<double>(m) - centre) * spacing, bs_position.y, bs_position.z};
    const double d = distance(element, user);
    if (!(d > 0.0)) throw std::domain_error("ula_channel: user coincides with an array element");
    h.push_back(Cplx<double>::polar(reference_gain * std::pow(d, -alpha / 2.0), -kTwoPi * d / wavelength));
  }
  return h;
}

}  // namespace pinchcomp
