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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pinchcomp/rate.hpp"

namespace {

using namespace pinchcomp;

struct Instance {
  SystemGeometry g;
  PinchingState p;
  BeamformingState w;
  EffectiveChannel a;
};

Instance random_instance(std::uint64_t seed, int users = 2, int waveguides = 2) {
  std::mt19937_64 rng(seed);
  GeometryConfig c;
  c.user_seed = seed;
  c.users = users;
  c.waveguides_per_bs = waveguides;
  Instance in{build_geometry(c), {}, {}, {}};
  in.p = oracle::random_feasible_positions(in.g, rng);
  in.w = oracle::random_beams(in.g, rng, 0.8);
  in.a = effective_channels(in.g, in.p);
  return in;
}

TEST(Rate, SingleUserHasNoInterference) {
  const Instance in = random_instance(11, 1);
  const UserTerms<double> t = user_rate(in.a, in.w, 0, in.g.noise_power);
  EXPECT_EQ(t.interference1, 0.0);
  EXPECT_EQ(t.interference2, 0.0);
  std::complex<double> s(0.0, 0.0);
  for (int b = 0; b < kBsCount; ++b)
    for (std::size_t n = 0; n < in.a.row(0, b).size(); ++n) {
      s += to_std(in.a.row(0, b)[n]) * to_std(in.w.w[static_cast<std::size_t>(b)](n, 0));
    }
  EXPECT_NEAR(t.rate, std::log2(1.0 + std::norm(s) / in.g.noise_power), 1e-12);
}

TEST(Rate, ZeroBeamsGiveZeroRate) {
  const Instance in = random_instance(12);
  const RateReport r = sum_rate(in.a, zero_beamforming(in.g), in.g.noise_power, 0.2);
  EXPECT_EQ(r.sum_rate, 0.0);
  for (double s : r.per_user_sinr) EXPECT_EQ(s, 0.0);
  EXPECT_FALSE(r.all_qos());
}

TEST(Rate, MatchesTermByTermOracle) {
  for (std::uint64_t seed = 3; seed < 13; ++seed) {
    const Instance in = random_instance(seed);
    const RateReport r = sum_rate(in.a, in.w, in.g.noise_power);
    const auto ref = oracle::user_rates(oracle::channel(in.g, in.p), in.w, in.g.noise_power);
    double total = 0.0;
    for (std::size_t k = 0; k < ref.size(); ++k) {
      EXPECT_NEAR(r.per_user_rate[k], ref[k], 1e-10 * std::max(1.0, ref[k]));
      total += r.per_user_rate[k];
    }
    EXPECT_DOUBLE_EQ(r.sum_rate, total);
  }
}

TEST(Rate, SymmetricUsersGetEqualRates) {
  // Users mirrored about x = D/2 with mirrored PAs and mirrored (conjugate-symmetric) setups
  // reduce to identical channels when the channel rows are swapped by construction.
  EffectiveChannel a;
  a.gains.resize(2);
  const Cplx<double> h1{1e-5, 2e-6};
  const Cplx<double> h2{-3e-6, 4e-6};
  a.gains[0] = {std::vector<Cplx<double>>{h1, h2}, std::vector<Cplx<double>>{h2, h1}};
  a.gains[1] = {std::vector<Cplx<double>>{h2, h1}, std::vector<Cplx<double>>{h1, h2}};
  BeamformingState w;
  for (auto& m : w.w) m = CMatrix<double>(2, 2);
  w.w[0](0, 0) = conj(h1);
  w.w[0](1, 0) = conj(h2);
  w.w[1](0, 0) = conj(h2);
  w.w[1](1, 0) = conj(h1);
  w.w[0](0, 1) = conj(h2);
  w.w[0](1, 1) = conj(h1);
  w.w[1](0, 1) = conj(h1);
  w.w[1](1, 1) = conj(h2);
  for (auto& m : w.w)
    for (auto& z : m.data) z = 1e3 * z;
  const RateReport r = sum_rate(a, w, 1e-12);
  EXPECT_DOUBLE_EQ(r.per_user_rate[0], r.per_user_rate[1]);
}

TEST(Rate, ReportInvariants) {
  const Instance in = random_instance(14);
  const RateReport r = sum_rate(in.a, in.w, in.g.noise_power, 0.5);
  double total = 0.0;
  for (std::size_t k = 0; k < r.per_user_rate.size(); ++k) {
    EXPECT_GE(r.per_user_rate[k], 0.0);
    EXPECT_DOUBLE_EQ(r.per_user_rate[k], std::log2(1.0 + r.per_user_sinr[k]));
    EXPECT_EQ(r.feasible_qos[k], r.per_user_rate[k] >= 0.5 - kQosTolerance);
    total += r.per_user_rate[k];
  }
  EXPECT_DOUBLE_EQ(r.sum_rate, total);
}

TEST(Rate, RejectsShapeMismatch) {
  const Instance in = random_instance(15);
  BeamformingState bad = in.w;
  bad.w[1] = CMatrix<double>(3, 2);
  EXPECT_THROW(sum_rate(in.a, bad, in.g.noise_power), std::invalid_argument);
  EXPECT_THROW(sum_rate(in.a, in.w, 0.0), std::invalid_argument);
}

TEST(Rate, PowerCheck) {
  const SystemGeometry g = build_geometry(GeometryConfig{});
  BeamformingState w = zero_beamforming(g);
  PowerCheck c = power_check(w, g.power_budget);
  EXPECT_TRUE(c.feasible);
  EXPECT_EQ(c.used[0], 0.0);

  w.w[0](1, 0) = {std::sqrt(g.power_budget[0]), 0.0};
  c = power_check(w, g.power_budget);
  EXPECT_TRUE(c.feasible);
  EXPECT_NEAR(c.used[0], g.power_budget[0], 1e-18);

  std::mt19937_64 rng(16);
  BeamformingState r = oracle::random_beams(g, rng, 1.0);
  for (auto& z : r.w[1].data) z = 2.0 * z;
  c = power_check(r, g.power_budget);
  EXPECT_FALSE(c.feasible);
  EXPECT_NEAR(c.used[1], 4.0 * g.power_budget[1], 1e-12);
}

TEST(Rate, WdmaSingleUserMatchesSparseBeam) {
  const Instance in = random_instance(17, 1);
  const WdmaAssignment asg{{1, 0}};
  WaveguidePowers powers{std::vector<double>{0.0, 0.03}, std::vector<double>{0.02, 0.0}};
  const RateReport r = wdma_rate(in.a, asg, powers, in.g.noise_power);
  const std::complex<double> s = std::abs(to_std(in.a.row(0, 0)[1])) * std::sqrt(0.03) +
                                 std::abs(to_std(in.a.row(0, 1)[0])) * std::sqrt(0.02);
  EXPECT_NEAR(r.sum_rate, std::log2(1.0 + std::norm(s) / in.g.noise_power), 1e-12);
}

TEST(Rate, WdmaSilentOthersIsInterferenceFree) {
  const Instance in = random_instance(18);
  const WdmaAssignment asg{{0, 1}, {1, 0}};
  WaveguidePowers powers{std::vector<double>{0.03, 0.0}, std::vector<double>{0.0, 0.03}};
  const RateReport r = wdma_rate(in.a, asg, powers, in.g.noise_power);
  EXPECT_EQ(r.interference[0][0] + r.interference[0][1], 0.0);
  const std::complex<double> s = std::abs(to_std(in.a.row(0, 0)[0])) * std::sqrt(0.03) +
                                 std::abs(to_std(in.a.row(0, 1)[1])) * std::sqrt(0.03);
  EXPECT_NEAR(r.per_user_rate[0], std::log2(1.0 + std::norm(s) / in.g.noise_power), 1e-12);
  EXPECT_EQ(r.per_user_rate[1], 0.0);
}

TEST(Rate, WdmaEqualsSparseSumRate) {
  for (std::uint64_t seed = 20; seed < 30; ++seed) {
    const Instance in = random_instance(seed);
    const WdmaAssignment asg{{seed % 2, 0}, {1 - seed % 2, 1}};
    const double each = in.g.power_budget[0] / 2.0;
    const WaveguidePowers powers{std::vector<double>{each, each}, std::vector<double>{each, each}};
    const BeamformingState sparse = wdma_beamforming(in.a, asg, powers);
    const RateReport lhs = wdma_rate(in.a, asg, powers, in.g.noise_power);
    const RateReport rhs = sum_rate(in.a, sparse, in.g.noise_power);
    EXPECT_NEAR(lhs.sum_rate, rhs.sum_rate, 1e-12 * std::max(1.0, rhs.sum_rate));
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(lhs.per_user_rate[k], rhs.per_user_rate[k], 1e-12);
  }
}

TEST(Rate, WdmaRejectsSharedWaveguide) {
  const Instance in = random_instance(31);
  const WaveguidePowers powers{std::vector<double>{0.01, 0.01}, std::vector<double>{0.01, 0.01}};
  EXPECT_THROW(wdma_rate(in.a, {{0, 0}, {0, 1}}, powers, in.g.noise_power), std::invalid_argument);
  EXPECT_THROW(wdma_rate(in.a, {{0, 0}, {2, 1}}, powers, in.g.noise_power), std::out_of_range);
}

}  // namespace
