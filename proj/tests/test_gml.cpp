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

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "pinchcomp/gml.hpp"

namespace {

using namespace pinchcomp;

GmlConfig tiny_config() {
  GmlConfig c;
  c.inner_iterations = 3;
  c.outer_iterations = 4;
  c.epochs = 2;
  c.hidden = 16;
  return c;
}

void zero_net(MlpParams& p) {
  for (auto* part : {&p.w1, &p.b1, &p.w2, &p.b2})
    for (double& v : *part) v = 0.0;
}

TEST(Gml, FeasiblePointHasOnlyRateLoss) {
  const SystemGeometry g = build_geometry(GeometryConfig{});
  const PinchingState p = equidistant_positions(g);
  const BeamformingState w = initial_beamforming(g, p, 1);
  const BasicLoss<double> l = meta_loss(g, w, p, GmlConfig{});
  const RateReport r = sum_rate(effective_channels(g, p), w, g.noise_power, g.rate_threshold);
  ASSERT_TRUE(r.all_qos());
  EXPECT_EQ(l.threshold_loss, 0.0);
  EXPECT_EQ(l.spacing_loss, 0.0);
  EXPECT_EQ(l.range_loss, 0.0);
  EXPECT_EQ(l.total, -l.sum_rate);
  EXPECT_EQ(l.rate_loss + l.sum_rate, 0.0);
  EXPECT_DOUBLE_EQ(l.sum_rate, r.sum_rate);
}

TEST(Gml, IndicatorSpacingPenalty) {
  const SystemGeometry g = build_geometry(GeometryConfig{});
  PinchingState p = equidistant_positions(g);
  p.x[0][1][2] = p.x[0][1][1];
  GmlConfig c;
  c.penalty = PenaltyMode::Indicator;
  const BasicLoss<double> l = meta_loss(g, initial_beamforming(g, p, 1), p, c);
  EXPECT_DOUBLE_EQ(l.spacing_loss, c.zeta2);
  c.penalty = PenaltyMode::Hinge;
  EXPECT_DOUBLE_EQ(meta_loss(g, initial_beamforming(g, p, 1), p, c).spacing_loss, c.zeta2 * g.min_spacing);
}

TEST(Gml, HingeThresholdPenalty) {
  // One user, rate set exactly R_th - 0.1 by choosing the threshold after the fact.
  GeometryConfig gc;
  gc.users = 1;
  SystemGeometry g = build_geometry(gc);
  const PinchingState p = equidistant_positions(g);
  const BeamformingState w = initial_beamforming(g, p, 2);
  const double rate = sum_rate(effective_channels(g, p), w, g.noise_power).sum_rate;
  g.rate_threshold = rate + 0.1;
  const GmlConfig c;
  const BasicLoss<double> l = meta_loss(g, w, p, c);
  EXPECT_NEAR(l.threshold_loss, c.zeta1 * 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(l.total, l.rate_loss + l.threshold_loss + l.spacing_loss + l.range_loss);
}

TEST(Gml, RangePenalty) {
  const SystemGeometry g = build_geometry(GeometryConfig{});
  PinchingState p = equidistant_positions(g);
  p.x[1][0][0] = -0.25;
  p.x[1][1][3] = 80.5;
  const BeamformingState w = initial_beamforming(g, equidistant_positions(g), 1);
  GmlConfig c;
  EXPECT_NEAR(meta_loss(g, w, p, c).range_loss, c.zeta2 * 0.75, 1e-15);
  c.penalty = PenaltyMode::Indicator;
  EXPECT_NEAR(meta_loss(g, w, p, c).range_loss, c.zeta2 * 2.0, 1e-15);
}

TEST(Gml, ZeroPenaltyWeightsGiveNegativeSumRate) {
  const SystemGeometry g = build_geometry(GeometryConfig{});
  PinchingState p = equidistant_positions(g);
  p.x[0][0][0] = -3.0;
  GmlConfig c;
  c.zeta1 = 0.0;
  c.zeta2 = 0.0;
  const BasicLoss<double> l = meta_loss(g, initial_beamforming(g, p, 4), p, c);
  EXPECT_EQ(l.total, -l.sum_rate);
}

TEST(Gml, HingeLossIsContinuous) {
  std::mt19937_64 rng(31);
  const SystemGeometry g = build_geometry(GeometryConfig{});
  PinchingState p = oracle::random_feasible_positions(g, rng);
  p.x[0][0][1] = p.x[0][0][0] + 0.002;  // inside the spacing hinge
  const BeamformingState w = oracle::random_beams(g, rng, 0.8);
  const GmlConfig c;
  const double base = meta_loss(g, w, p, c).total;
  for (double eps : {1e-7, 1e-8, 1e-9}) {
    PinchingState q = p;
    q.x[0][0][1] += eps;
    BeamformingState v = w;
    v.w[1](0, 1).re += eps;
    EXPECT_LT(std::abs(meta_loss(g, v, q, c).total - base), 1e4 * eps);
  }
}

TEST(Gml, NormalizePower) {
  std::mt19937_64 rng(32);
  const SystemGeometry g = build_geometry(GeometryConfig{});
  const BeamformingState half = oracle::random_beams(g, rng, 0.5);
  const BeamformingState same = normalize_power(half, g.power_budget);
  for (std::size_t b = 0; b < kBsCount; ++b) EXPECT_EQ(same.w[b].data.size(), half.w[b].data.size());
  for (std::size_t b = 0; b < kBsCount; ++b)
    for (std::size_t i = 0; i < half.w[b].data.size(); ++i) EXPECT_EQ(same.w[b].data[i].re, half.w[b].data[i].re);

  const BeamformingState big = oracle::random_beams(g, rng, 4.0);
  const BeamformingState scaled = normalize_power(big, g.power_budget);
  for (std::size_t b = 0; b < kBsCount; ++b) {
    EXPECT_NEAR(transmit_power(scaled.w[b]), g.power_budget[b], 1e-9 * g.power_budget[b]);
    EXPECT_NEAR(scaled.w[b].data[0].re, 0.5 * big.w[b].data[0].re, 1e-15);
  }
  EXPECT_TRUE(power_check(scaled, g.power_budget).feasible);
}

TEST(Gml, ZeroBvnLeavesBeamsUnchanged) {
  const SystemGeometry g = build_geometry(GeometryConfig{});
  const PinchingState p = equidistant_positions(g);
  const BeamformingState w = initial_beamforming(g, p, 5);
  MlpParams bvn = mlp_init(6, 8, 6, 1);
  zero_net(bvn);
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const auto out = inner_update_W(g, lift<ad::Var>(w), p, on_tape(bvn, tape), {0, 3, nullptr});
  const BeamformingState v = values(out);
  for (std::size_t b = 0; b < kBsCount; ++b) {
    ASSERT_EQ(v.w[b].rows, w.w[b].rows);
    ASSERT_EQ(v.w[b].cols, w.w[b].cols);
    for (std::size_t i = 0; i < w.w[b].data.size(); ++i) EXPECT_EQ(v.w[b].data[i].re, w.w[b].data[i].re);
  }
}

TEST(Gml, ZeroPpnLeavesPositionsUnchanged) {
  const SystemGeometry g = build_geometry(GeometryConfig{});
  const PinchingState p = equidistant_positions(g);
  const BeamformingState w = initial_beamforming(g, p, 5);
  MlpParams ppn = mlp_init(5, 8, 4, 1);
  zero_net(ppn);
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const auto out = inner_update_P(g, lift<ad::Var>(w), lift<ad::Var>(p), on_tape(ppn, tape), {0, 3, nullptr});
  EXPECT_EQ(values(out).x, p.x);
}

/// One hidden unit passing the first normalised gradient coordinate through with gain `gain`.
MlpParams follower(int in, int out, double gain) {
  MlpParams m = mlp_init(in, 2, out, 1);
  zero_net(m);
  m.w1[0] = 1.0;                         // unit 0: relu(+g)
  m.w1[static_cast<std::size_t>(in)] = -1.0;  // unit 1: relu(-g)
  m.w2[0] = gain;
  m.w2[1] = -gain;
  return m;
}

TEST(Gml, GradientFollowingBvnIncreasesRate) {
  GeometryConfig gc;
  gc.users = 1;
  gc.waveguides_per_bs = 1;
  gc.pas_per_waveguide = 1;
  const SystemGeometry g = build_geometry(gc);
  const PinchingState p = equidistant_positions(g);
  const BeamformingState w = initial_beamforming(g, p, 6);
  const double before = sum_rate(effective_channels(g, p), w, g.noise_power).sum_rate;
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const MlpParams bvn = follower(4, 4, 1e-4);
  const auto out = inner_update_W(g, lift<ad::Var>(w), p, on_tape(bvn, tape), {0, 1, nullptr});
  const double after = sum_rate(effective_channels(g, p), values(out), g.noise_power).sum_rate;
  EXPECT_GT(after, before);
}

TEST(Gml, GradientFollowingPpnMovesTowardBetterRate) {
  GeometryConfig gc;
  gc.users = 1;
  gc.waveguides_per_bs = 1;
  gc.pas_per_waveguide = 1;
  gc.user_positions = {{30.0, 40.0}};
  const SystemGeometry g = build_geometry(gc);
  PinchingState p = zero_positions(g);
  p.x[0][0][0] = 45.0;
  p.x[1][0][0] = 30.0;
  const BeamformingState w = initial_beamforming(g, p, 7);
  const double before = sum_rate(effective_channels(g, p), w, g.noise_power).sum_rate;
  ad::Tape tape;
  ad::Tape::Scope scope(tape);
  const MlpParams ppn = follower(2, 1, 1e-5);
  const auto out = inner_update_P(g, lift<ad::Var>(w), lift<ad::Var>(p), on_tape(ppn, tape), {0, 1, nullptr},
                                  PpnWiring::PerWaveguide, g.guided_wavelength);
  const PinchingState q = values(out);
  EXPECT_NE(q.x[0][0][0], p.x[0][0][0]);
  EXPECT_GT(sum_rate(effective_channels(g, q), w, g.noise_power).sum_rate, before);
}

TEST(Gml, ZeroNetworksGiveFixedPoint) {
  const SystemGeometry g = build_geometry(GeometryConfig{});
  GmlConfig c = tiny_config();
  c.init = NetInit::Random;
  GmlTrainer t(g, c);
  zero_net(t.bvn());
  zero_net(t.ppn());
  const BeamformingState w0 = t.initial_w();
  const PinchingState p0 = t.initial_p();
  const BasicLoss<double> expected = meta_loss(g, normalize_power(w0, g.power_budget), p0, c);
  for (int j = 0; j < c.outer_iterations; ++j) {
    const LossBreakdown l = t.run_outer_iteration();
    // The tape evaluates phases in double, the value path in extended precision.
    EXPECT_NEAR(l.total, expected.total, 1e-10 * std::abs(expected.total));
  }
  const TrainResult r = t.result();
  ASSERT_EQ(r.trace.size(), static_cast<std::size_t>(c.outer_iterations));
  EXPECT_EQ(r.best_p.x, p0.x);
}

TEST(Gml, TrainSmokeAndBookkeeping) {
  GeometryConfig gc;
  gc.users = 1;
  gc.waveguides_per_bs = 1;
  gc.pas_per_waveguide = 1;
  const SystemGeometry tiny = build_geometry(gc);
  GmlConfig one;
  one.inner_iterations = 1;
  one.outer_iterations = 1;
  one.epochs = 1;
  one.hidden = 8;
  GmlTrainer t1(tiny, one);
  EXPECT_TRUE(std::isfinite(t1.run_epoch()));

  const SystemGeometry g = build_geometry(GeometryConfig{});
  const GmlConfig c = tiny_config();
  const TrainResult r = train(g, c);
  ASSERT_EQ(r.trace.size(), static_cast<std::size_t>(c.outer_iterations * c.epochs));
  double running = 0.0;
  double best_feasible = 0.0;
  for (const TraceEntry& e : r.trace) {
    EXPECT_GE(e.best_so_far, running);
    running = e.best_so_far;
    if (e.feasible) best_feasible = std::max(best_feasible, e.sum_rate);
    EXPECT_DOUBLE_EQ(e.loss.total, e.loss.rate_loss + e.loss.threshold_loss + e.loss.spacing_loss + e.loss.range_loss);
  }
  EXPECT_EQ(r.trace.back().epoch, c.epochs - 1);
  EXPECT_EQ(r.trace.back().outer, c.outer_iterations - 1);
  if (r.found_feasible) {
    EXPECT_DOUBLE_EQ(r.best_sum_rate, best_feasible);
    EXPECT_TRUE(power_check(r.best_w, g.power_budget).feasible);
    EXPECT_TRUE(placement_feasible(g, r.best_p));
    EXPECT_TRUE(r.best_report.all_qos());
  }
}

TEST(Gml, TrainingIsDeterministic) {
  const SystemGeometry g = build_geometry(GeometryConfig{});
  const GmlConfig c = tiny_config();
  const TrainResult a = train(g, c);
  const TrainResult b = train(g, c);
  ASSERT_EQ(a.trace.size(), b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    EXPECT_EQ(a.trace[i].sum_rate, b.trace[i].sum_rate);
    EXPECT_EQ(a.trace[i].loss.total, b.trace[i].loss.total);
  }
  EXPECT_EQ(a.bvn.flatten(), b.bvn.flatten());
  EXPECT_EQ(a.ppn.flatten(), b.ppn.flatten());
}

TEST(Gml, ConfigValidation) {
  GmlConfig c;
  c.inner_iterations = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = GmlConfig{};
  c.zeta1 = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = GmlConfig{};
  c.lr_p = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Gml, AssessClampsTinyOvershoot) {
  const SystemGeometry g = build_geometry(GeometryConfig{});
  PinchingState p = equidistant_positions(g);
  p.x[0][0][3] = 80.0 + 5e-7;
  p.x[1][0][0] = -5e-7;
  const Candidate c = assess_candidate(g, initial_beamforming(g, equidistant_positions(g), 1), p);
  EXPECT_EQ(c.p.x[0][0][3], 80.0);
  EXPECT_EQ(c.p.x[1][0][0], 0.0);
  EXPECT_TRUE(placement_feasible(g, c.p));
  p.x[1][0][0] = -1e-3;
  EXPECT_FALSE(assess_candidate(g, initial_beamforming(g, equidistant_positions(g), 1), p).feasible);
}

TEST(Gml, InitialBeamsUseHalfBudget) {
  const SystemGeometry g = build_geometry(GeometryConfig{});
  const BeamformingState w = initial_beamforming(g, equidistant_positions(g), 9);
  for (std::size_t b = 0; b < kBsCount; ++b) EXPECT_NEAR(transmit_power(w.w[b]), 0.5 * g.power_budget[b], 1e-15);
}

}  // namespace
