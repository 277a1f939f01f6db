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

// SINR, achievable rate and sum rate of the coordinated downlink:
//
//   R_k = log2(1 + |a_{k,1} w_{k,1} + a_{k,2} w_{k,2}|^2 / (I_1 + I_2 + sigma^2))
//   I_b = sum_{k' != k} |a_{k,b} w_{k',b}|^2
//
// Desired signals from the two BSs add coherently; interference adds in power
// per BS.

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "pinchcomp/channel.hpp"
#include "pinchcomp/complex.hpp"

namespace pinchcomp {

/// Beamforming matrices W_b (N_b x K); column k is the beam for user k.
template <class T>
struct BasicBeamforming {
  std::array<CMatrix<T>, kBsCount> w;

  std::size_t user_count() const { return w[0].cols; }
};
using BeamformingState = BasicBeamforming<double>;

inline BeamformingState zero_beamforming(const SystemGeometry& g) {
  BeamformingState s;
  for (std::size_t b = 0; b < kBsCount; ++b) s.w[b] = CMatrix<double>(g.waveguides[b].size(), g.users.size());
  return s;
}

template <class T>
struct UserTerms {
  T signal;
  T interference1;
  T interference2;
  T sinr;
  T rate;
};

template <class T>
Cplx<T> row_times_column(const std::vector<Cplx<T>>& a, const CMatrix<T>& w, std::size_t column) {
  if (a.size() != w.rows) throw std::invalid_argument("rate: channel row and beamforming matrix disagree");
  Cplx<T> acc{T(0.0), T(0.0)};
  for (std::size_t n = 0; n < a.size(); ++n) acc += a[n] * w(n, column);
  return acc;
}

template <class T>
UserTerms<T> user_rate(const BasicChannel<T>& a, const BasicBeamforming<T>& W, std::size_t user,
                       double noise_power) {
  using std::log;
  if (!(noise_power > 0.0)) throw std::invalid_argument("rate: noise power must be positive");
  const std::size_t K = a.user_count();
  if (W.w[0].cols != K || W.w[1].cols != K) throw std::invalid_argument("rate: beamforming user count mismatch");
  if (user >= K) throw std::out_of_range("rate: user index");

  const Cplx<T> s = row_times_column(a.row(user, 0), W.w[0], user) + row_times_column(a.row(user, 1), W.w[1], user);
  std::array<T, kBsCount> interference{T(0.0), T(0.0)};
  for (int b = 0; b < kBsCount; ++b) {
    for (std::size_t j = 0; j < K; ++j) {
      if (j == user) continue;
      interference[static_cast<std::size_t>(b)] += norm2(row_times_column(a.row(user, b), W.w[static_cast<std::size_t>(b)], j));
    }
  }
  UserTerms<T> t;
  t.signal = norm2(s);
  t.interference1 = interference[0];
  t.interference2 = interference[1];
  t.sinr = t.signal / (interference[0] + interference[1] + T(noise_power));
  t.rate = log(T(1.0) + t.sinr) * T(1.0 / std::numbers::ln2);
  return t;
}

/// Sum over users of log2(1 + SINR_k); per-user rates are written to `rates` when given.
template <class T>
T sum_rate_value(const BasicChannel<T>& a, const BasicBeamforming<T>& W, double noise_power,
                 std::vector<T>* rates = nullptr) {
  T total(0.0);
  if (rates != nullptr) rates->clear();
  for (std::size_t k = 0; k < a.user_count(); ++k) {
    const T r = user_rate(a, W, k, noise_power).rate;
    if (rates != nullptr) rates->push_back(r);
    total += r;
  }
  return total;
}

struct RateReport {
  std::vector<double> per_user_rate;
  std::vector<double> per_user_sinr;
  std::vector<std::array<double, kBsCount>> interference;
  std::vector<bool> feasible_qos;
  double sum_rate = 0.0;

  bool all_qos() const {
    for (bool f : feasible_qos)
      if (!f) return false;
    return true;
  }
};

inline constexpr double kQosTolerance = 1e-9;

inline RateReport sum_rate(const EffectiveChannel& a, const BeamformingState& W, double noise_power,
                           double rate_threshold = 0.0) {
  RateReport r;
  for (std::size_t k = 0; k < a.user_count(); ++k) {
    const UserTerms<double> t = user_rate(a, W, k, noise_power);
    r.per_user_rate.push_back(t.rate);
    r.per_user_sinr.push_back(t.sinr);
    r.interference.push_back({t.interference1, t.interference2});
    r.feasible_qos.push_back(t.rate >= rate_threshold - kQosTolerance);
    r.sum_rate += t.rate;
  }
  return r;
}

struct PowerCheck {
  std::array<double, kBsCount> used{};
  bool feasible = true;
};

inline constexpr double kPowerTolerance = 1e-9;

/// trace(W_b W_b^H) per BS against the budgets (relative tolerance 1e-9).
template <class T>
T transmit_power(const CMatrix<T>& w) {
  T p(0.0);
  for (const auto& z : w.data) p += norm2(z);
  return p;
}

inline PowerCheck power_check(const BeamformingState& W, const std::array<double, kBsCount>& budgets) {
  PowerCheck c;
  for (std::size_t b = 0; b < kBsCount; ++b) {
    c.used[b] = transmit_power(W.w[b]);
    if (c.used[b] > budgets[b] * (1.0 + kPowerTolerance)) c.feasible = false;
  }
  return c;
}

/// Waveguide serving each user at each BS, indexed [user][bs].
using WdmaAssignment = std::vector<std::array<std::size_t, kBsCount>>;
/// Transmit power per waveguide, indexed [bs][waveguide].
using WaveguidePowers = std::array<std::vector<double>, kBsCount>;

inline void check_wdma(const EffectiveChannel& a, const WdmaAssignment& assignment, const WaveguidePowers& powers) {
  if (assignment.size() != a.user_count()) throw std::invalid_argument("wdma: one assignment per user required");
  for (int b = 0; b < kBsCount; ++b) {
    const auto bb = static_cast<std::size_t>(b);
    const std::size_t n_wg = a.user_count() > 0 ? a.row(0, b).size() : 0;
    if (powers[bb].size() != n_wg) throw std::invalid_argument("wdma: one power per waveguide required");
    std::vector<bool> used(n_wg, false);
    for (const auto& pair : assignment) {
      if (pair[bb] >= n_wg) throw std::out_of_range("wdma: waveguide index");
      if (used[pair[bb]]) throw std::invalid_argument("wdma: assignment is not injective");
      used[pair[bb]] = true;
    }
  }
}

/// Beam entry that co-phases a waveguide with the user's channel on it.
inline Cplx<double> wdma_entry(const Cplx<double>& gain, double power) {
  const double mag = std::sqrt(norm2(gain));
  if (mag == 0.0) return {std::sqrt(power), 0.0};
  return {std::sqrt(power) * gain.re / mag, -std::sqrt(power) * gain.im / mag};
}

/// The sparse beamforming matrix a WDMA assignment implies: column k has one
/// non-zero entry per BS, on the user's waveguide.
inline BeamformingState wdma_beamforming(const EffectiveChannel& a, const WdmaAssignment& assignment,
                                         const WaveguidePowers& powers) {
  check_wdma(a, assignment, powers);
  BeamformingState W;
  for (std::size_t b = 0; b < kBsCount; ++b) W.w[b] = CMatrix<double>(powers[b].size(), a.user_count());
  for (std::size_t k = 0; k < a.user_count(); ++k) {
    for (int b = 0; b < kBsCount; ++b) {
      const auto bb = static_cast<std::size_t>(b);
      const std::size_t n = assignment[k][bb];
      W.w[bb](n, k) = wdma_entry(a.row(k, b)[n], powers[bb][n]);
    }
  }
  return W;
}

/// Rates when every user owns one waveguide per BS and all other users'
/// waveguides act as interference.
inline RateReport wdma_rate(const EffectiveChannel& a, const WdmaAssignment& assignment, const WaveguidePowers& powers,
                            double noise_power, double rate_threshold = 0.0) {
  check_wdma(a, assignment, powers);
  if (!(noise_power > 0.0)) throw std::invalid_argument("rate: noise power must be positive");
  RateReport r;
  const std::size_t K = a.user_count();
  for (std::size_t k = 0; k < K; ++k) {
    Cplx<double> s{0.0, 0.0};
    std::array<double, kBsCount> interference{0.0, 0.0};
    for (int b = 0; b < kBsCount; ++b) {
      const auto bb = static_cast<std::size_t>(b);
      const std::size_t own = assignment[k][bb];
      s += a.row(k, b)[own] * wdma_entry(a.row(k, b)[own], powers[bb][own]);
      for (std::size_t j = 0; j < K; ++j) {
        if (j == k) continue;
        const std::size_t other = assignment[j][bb];
        const Cplx<double> leak = a.row(k, b)[other] * wdma_entry(a.row(j, b)[other], powers[bb][other]);
        interference[bb] += norm2(leak);
      }
    }
    const double sinr = norm2(s) / (interference[0] + interference[1] + noise_power);
    const double rate = std::log2(1.0 + sinr);
    r.per_user_rate.push_back(rate);
    r.per_user_sinr.push_back(sinr);
    r.interference.push_back(interference);
    r.feasible_qos.push_back(rate >= rate_threshold - kQosTolerance);
    r.sum_rate += rate;
  }
  return r;
}

}  // namespace pinchcomp
