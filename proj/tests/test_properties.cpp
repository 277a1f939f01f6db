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
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "pinchcomp/gml.hpp"

namespace {

using namespace pinchcomp;

constexpr int kTrials = 25;

struct Instance {
  SystemGeometry g;
  PinchingState p;
  BeamformingState w;
  EffectiveChannel a;
};

Instance random_instance(std::mt19937_64& rng, int users = 2) {
  GeometryConfig c;
  c.user_seed = rng();
  c.users = users;
  Instance in{build_geometry(c), {}, {}, {}};
  in.p = oracle::random_feasible_positions(in.g, rng);
  in.w = oracle::random_beams(in.g, rng, 0.9);
  in.a = effective_channels(in.g, in.p);
  return in;
}

BeamformingState scaled(BeamformingState w, double s) {
  for (auto& m : w.w)
    for (auto& z : m.data) z = s * z;
  return w;
}

TEST(Properties, CommonPhaseRotationLeavesRates) {
  std::mt19937_64 rng(401);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  for (int t = 0; t < kTrials; ++t) {
    const Instance in = random_instance(rng);
    BeamformingState r = in.w;
    const double th = angle(rng);
    const Cplx<double> rot{std::cos(th), std::sin(th)};
    for (auto& m : r.w)
      for (auto& z : m.data) z = rot * z;
    const RateReport a = sum_rate(in.a, in.w, in.g.noise_power);
    const RateReport b = sum_rate(in.a, r, in.g.noise_power);
    for (std::size_t k = 0; k < a.per_user_rate.size(); ++k) {
      EXPECT_NEAR(a.per_user_rate[k], b.per_user_rate[k], 1e-11 * std::max(1.0, a.per_user_rate[k]));
    }
  }
}

TEST(Properties, PerUserPhaseRotationLeavesRates) {
  std::mt19937_64 rng(402);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  for (int t = 0; t < kTrials; ++t) {
    const Instance in = random_instance(rng);
    BeamformingState r = in.w;
    for (std::size_t k = 0; k < r.user_count(); ++k) {
      const double th = angle(rng);
      const Cplx<double> rot{std::cos(th), std::sin(th)};
      for (auto& m : r.w)
        for (std::size_t n = 0; n < m.rows; ++n) m(n, k) = rot * m(n, k);
    }
    const double a = sum_rate(in.a, in.w, in.g.noise_power).sum_rate;
    const double b = sum_rate(in.a, r, in.g.noise_power).sum_rate;
    EXPECT_NEAR(a, b, 1e-11 * std::max(1.0, a));
  }
}

TEST(Properties, RatesDecreaseWithNoise) {
  std::mt19937_64 rng(403);
  for (int t = 0; t < kTrials; ++t) {
    const Instance in = random_instance(rng);
    const RateReport lo = sum_rate(in.a, in.w, in.g.noise_power);
    const RateReport hi = sum_rate(in.a, in.w, 2.0 * in.g.noise_power);
    for (std::size_t k = 0; k < lo.per_user_rate.size(); ++k) {
      EXPECT_LE(hi.per_user_rate[k], lo.per_user_rate[k]);
      EXPECT_LE(hi.per_user_sinr[k], lo.per_user_sinr[k]);
    }
  }
}

TEST(Properties, OwnBeamGainRaisesOwnRate) {
  std::mt19937_64 rng(404);
  for (int t = 0; t < kTrials; ++t) {
    const Instance in = random_instance(rng);
    const std::size_t k = static_cast<std::size_t>(t % 2);
    BeamformingState up = in.w;
    for (auto& m : up.w)
      for (std::size_t n = 0; n < m.rows; ++n) m(n, k) = 1.5 * m(n, k);
    const RateReport a = sum_rate(in.a, in.w, in.g.noise_power);
    const RateReport b = sum_rate(in.a, up, in.g.noise_power);
    EXPECT_GE(b.per_user_rate[k], a.per_user_rate[k]);
    EXPECT_LE(b.per_user_rate[1 - k], a.per_user_rate[1 - k] * (1.0 + 1e-12));
  }
}

TEST(Properties, JointPowerAndNoiseScalingLeavesRates) {
  std::mt19937_64 rng(405);
  for (int t = 0; t < kTrials; ++t) {
    const Instance in = random_instance(rng);
    const double a = sum_rate(in.a, in.w, in.g.noise_power).sum_rate;
    const double b = sum_rate(in.a, scaled(in.w, 3.0), 9.0 * in.g.noise_power).sum_rate;
    EXPECT_NEAR(a, b, 1e-11 * std::max(1.0, a));
  }
}

TEST(Properties, UserRelabelingPermutesRates) {
  std::mt19937_64 rng(406);
  for (int t = 0; t < kTrials; ++t) {
    const Instance in = random_instance(rng, 3);
    std::vector<std::size_t> perm{2, 0, 1};
    EffectiveChannel a;
    BeamformingState w = in.w;
    for (std::size_t k = 0; k < perm.size(); ++k) {
      a.gains.push_back(in.a.gains[perm[k]]);
      for (std::size_t b = 0; b < kBsCount; ++b)
        for (std::size_t n = 0; n < w.w[b].rows; ++n) w.w[b](n, k) = in.w.w[b](n, perm[k]);
    }
    const RateReport ref = sum_rate(in.a, in.w, in.g.noise_power);
    const RateReport got = sum_rate(a, w, in.g.noise_power);
    for (std::size_t k = 0; k < perm.size(); ++k) {
      EXPECT_NEAR(got.per_user_rate[k], ref.per_user_rate[perm[k]], 1e-12 * std::max(1.0, ref.per_user_rate[perm[k]]));
    }
  }
}

TEST(Properties, RateLossIsNegativeSumRate) {
  std::mt19937_64 rng(407);
  GmlConfig c;
  for (int t = 0; t < kTrials; ++t) {
    const Instance in = random_instance(rng);
    const LossBreakdown l = meta_loss(in.g, in.w, in.p, c);
    EXPECT_EQ(l.rate_loss + l.sum_rate, 0.0);
    EXPECT_NEAR(l.sum_rate, sum_rate(in.a, in.w, in.g.noise_power).sum_rate, 1e-12 * std::max(1.0, l.sum_rate));
    EXPECT_DOUBLE_EQ(l.total, l.rate_loss + l.threshold_loss + l.spacing_loss + l.range_loss);
    EXPECT_EQ(l.spacing_loss, 0.0);
    EXPECT_EQ(l.range_loss, 0.0);
  }
}

TEST(Properties, PenaltiesAreNonNegative) {
  std::mt19937_64 rng(408);
  std::uniform_real_distribution<double> u(-5.0, 85.0);
  for (PenaltyMode mode : {PenaltyMode::Indicator, PenaltyMode::Hinge}) {
    GmlConfig c;
    c.penalty = mode;
    for (int t = 0; t < kTrials; ++t) {
      Instance in = random_instance(rng);
      for (auto& bs : in.p.x)
        for (auto& wg : bs)
          for (double& x : wg) x = u(rng);
      const LossBreakdown l = meta_loss(in.g, in.w, in.p, c);
      EXPECT_GE(l.threshold_loss, 0.0);
      EXPECT_GE(l.spacing_loss, 0.0);
      EXPECT_GE(l.range_loss, 0.0);
    }
  }
}

TEST(Properties, HingePenaltyIsContinuousInPositions) {
  std::mt19937_64 rng(409);
  GmlConfig c;
  c.penalty = PenaltyMode::Hinge;
  for (int t = 0; t < kTrials; ++t) {
    Instance in = random_instance(rng);
    // First two PAs sit at the spacing limit next to the waveguide end, so
    // the moved PA crosses both the spacing and the range kink.
    auto& xs = in.p.x[0][0];
    xs[0] = 1e-4;
    xs[1] = xs[0] + in.g.min_spacing - 1e-4;
    PinchingState q = in.p;
    q.x[0][0][0] -= 2e-4;
    const LossBreakdown a = meta_loss(in.g, in.w, in.p, c);
    const LossBreakdown b = meta_loss(in.g, in.w, q, c);
    // Each hinge is 1-Lipschitz and the moved PA enters xs.size() - 1 pairs.
    const double pairs = static_cast<double>(xs.size() - 1);
    EXPECT_LE(std::abs(a.spacing_loss - b.spacing_loss), pairs * c.zeta2 * 2e-4 * (1.0 + 1e-9));
    EXPECT_LE(std::abs(a.range_loss - b.range_loss), c.zeta2 * 2e-4 * (1.0 + 1e-9));
  }
}

TEST(Properties, NormalizePowerProjectsOntoBudget) {
  std::mt19937_64 rng(410);
  std::uniform_real_distribution<double> scale(0.1, 4.0);
  for (int t = 0; t < kTrials; ++t) {
    const Instance in = random_instance(rng);
    const BeamformingState w = scaled(in.w, scale(rng));
    const BeamformingState n = normalize_power(w, in.g.power_budget);
    const PowerCheck before = power_check(w, in.g.power_budget);
    const PowerCheck after = power_check(n, in.g.power_budget);
    EXPECT_TRUE(after.feasible);
    for (std::size_t b = 0; b < kBsCount; ++b) {
      if (before.used[b] <= in.g.power_budget[b]) {
        for (std::size_t i = 0; i < w.w[b].data.size(); ++i) {
          EXPECT_EQ(n.w[b].data[i].re, w.w[b].data[i].re);
          EXPECT_EQ(n.w[b].data[i].im, w.w[b].data[i].im);
        }
        continue;
      }
      EXPECT_NEAR(after.used[b], in.g.power_budget[b], 1e-12 * in.g.power_budget[b]);
      // Direction is kept: the ratio of the two matrices is one real positive factor.
      const double f = std::sqrt(in.g.power_budget[b] / before.used[b]);
      for (std::size_t i = 0; i < w.w[b].data.size(); ++i) {
        EXPECT_NEAR(n.w[b].data[i].re, f * w.w[b].data[i].re, 1e-14);
        EXPECT_NEAR(n.w[b].data[i].im, f * w.w[b].data[i].im, 1e-14);
      }
    }
    const BeamformingState twice = normalize_power(n, in.g.power_budget);
    for (std::size_t b = 0; b < kBsCount; ++b)
      for (std::size_t i = 0; i < n.w[b].data.size(); ++i) {
        EXPECT_NEAR(twice.w[b].data[i].re, n.w[b].data[i].re, 1e-15);
        EXPECT_NEAR(twice.w[b].data[i].im, n.w[b].data[i].im, 1e-15);
      }
  }
}

TEST(Properties, ChannelMatchesOracleOnRandomDrops) {
  std::mt19937_64 rng(411);
  for (int t = 0; t < kTrials; ++t) {
    const Instance in = random_instance(rng, 1 + t % 3);
    const auto ref = oracle::channel(in.g, in.p);
    for (std::size_t k = 0; k < ref.size(); ++k)
      for (int b = 0; b < kBsCount; ++b) {
        const auto& row = in.a.row(k, b);
        for (std::size_t n = 0; n < row.size(); ++n) {
          const auto r = ref[k][static_cast<std::size_t>(b)][n];
          const double scale = static_cast<double>(std::abs(r));
          EXPECT_NEAR(row[n].re, static_cast<double>(r.real()), 1e-12 * scale);
          EXPECT_NEAR(row[n].im, static_cast<double>(r.imag()), 1e-12 * scale);
        }
      }
  }
}

}  // namespace
