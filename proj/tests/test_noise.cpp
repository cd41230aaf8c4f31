// Copyright 2026 The thermolearn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include <gtest/gtest.h>

#include "thermolearn/noise.hpp"

using namespace thermolearn;

namespace {
std::shared_ptr<const Dataset> tiny_images(std::size_t n, Seed seed) {
  return std::make_shared<const Dataset>(to_dataset(make_synthetic_classes(n, 4, 6, 6, seed), seed));
}
}  // namespace

TEST(CollectEta, FullBatchIsZero) {
  const auto data = std::make_shared<const Dataset>(make_synthetic(Ppm::two_state(std::log(3.0)), 40, 2));
  std::vector<TrajectoryLog> logs;
  for (Seed s = 0; s < 3; ++s) {
    BatchStream stream(data, 40, s);
    logs.push_back(train(PpmObjective(Ppm::two_state(0.0), data), stream, SgdConfig{0.1, 1.0, 10}));
  }
  // batches with replacement differ from B, so feed B itself
  for (auto& log : logs) {
    PpmObjective obj(Ppm::two_state(0.0), data);
    std::vector<std::size_t> all(40);
    for (std::size_t i = 0; i < 40; ++i) all[i] = i;
    for (auto& rec : log.steps) {
      rec = sgd_step(obj, all, SgdConfig{0.1, 1.0, 10});
      obj = obj.with_theta(rec.theta_after);
    }
  }
  const auto s = collect_eta(logs);
  for (double v : s.values) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(fdt_kB(s, 0.1), 0.0);
}

TEST(CollectEta, Errors) {
  TrajectoryLog a;
  a.theta0 = {0.0};
  a.steps.resize(2);
  EXPECT_THROW(collect_eta(std::vector<TrajectoryLog>{a}), IncompleteLogError);
  EXPECT_THROW(collect_eta(std::vector<TrajectoryLog>{}), InvalidArgument);
}

TEST(CollectEta, SmallerBatchesAreNoisier) {
  const auto data = tiny_images(200, 3);
  const std::vector<int> layers{36, 8, 4};
  std::vector<double> level;
  for (std::size_t b : {1, 10, 100}) {
    std::vector<TrajectoryLog> logs;
    for (Seed s = 0; s < 4; ++s) {
      BatchStream stream(data, b, s);
      logs.push_back(train(ClassifierObjective(layers, ClassifierObjective::initial_theta(layers, s), data), stream,
                           SgdConfig{0.05, 1.0, 40}));
    }
    const auto curve = variance_curve(collect_eta(logs));
    level.push_back(mean(std::span<const double>(curve).subspan(20)));
  }
  EXPECT_GT(level[0], level[1]);
  EXPECT_GT(level[1], level[2]);
}

TEST(Tcf, LagZeroIsVariance) {
  const auto s = white_noise_fixture(5, 10, 7, 3.0, 1);
  for (std::size_t t = 0; t < 10; ++t) {
    double acc = 0.0;
    for (std::size_t k = 0; k < 5; ++k)
      for (std::size_t c = 0; c < 7; ++c) acc += s.at(k, t, c) * s.at(k, t, c);
    EXPECT_NEAR(tcf(s, t, 0), acc / 35.0, 1e-12);
  }
  EXPECT_THROW(tcf(s, 5, 5), IndexError);
  EXPECT_THROW(tcf(s, 2, -3), IndexError);
}

TEST(Tcf, WhiteNoiseFixtureHasNoMemory) {
  const auto s = white_noise_fixture(50, 40, 64, 2.0, 5);
  for (long lag = 1; lag <= 10; ++lag) {
    const double v = tcf(s, 20, lag);
    EXPECT_LE(std::abs(v), 5.0 * tcf_stderr(s, 20, lag)) << "lag " << lag;
  }
  EXPECT_NEAR(tcf(s, 20, 0), 2.0, 5.0 * tcf_stderr(s, 20, 0));
}

TEST(Tcf, Symmetry) {
  const auto s = white_noise_fixture(20, 30, 32, 1.0, 8);
  for (long lag = 1; lag <= 5; ++lag)
    EXPECT_NEAR(tcf(s, 10, lag), tcf(s, 10 + static_cast<std::size_t>(lag), -lag), 1e-15);
}

TEST(FdtKB, Oracles) {
  const std::vector<double> flat(20, 4.0);
  EXPECT_NEAR(fdt_kB(flat, 0.1), 0.2, 1e-15);
  EXPECT_NEAR(fdt_kB(flat, 0.2), 2.0 * fdt_kB(flat, 0.1), 1e-15);
  std::vector<double> ramp(20);
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = 1.0 + static_cast<double>(i);
  EXPECT_THROW(fdt_kB(ramp, 0.1), NotStationaryError);
  EXPECT_THROW(fdt_kB(flat, -1.0), InvalidParameter);
}

TEST(NoiseStats, WhiteNoiseSummary) {
  const auto s = white_noise_fixture(30, 60, 40, 2.0, 4);
  const auto st = noise_stats(s, 0.01);
  EXPECT_TRUE(st.stationary);
  EXPECT_NEAR(st.kB_estimate, 0.01, 0.001);
  EXPECT_EQ(st.times.front(), 1u);
  EXPECT_EQ(st.ref_t, 31u);
  EXPECT_DOUBLE_EQ(st.autocorr_window.at(0), 1.0);
  for (long lag = 1; lag <= 20; ++lag) EXPECT_LT(std::abs(st.autocorr_window.at(lag)), 0.05);
  EXPECT_EQ(st.trial_variance.size(), 30u);
}

TEST(Equilibrium, OrnsteinUhlenbeck) {
  LongRunConfig cfg;
  cfg.sgd = SgdConfig{0.01, 1.0, 1000000};
  const auto eq = equilibrium_check(QuadraticTask{}, cfg);
  EXPECT_NEAR(eq.kB, 0.01, 0.001);
  EXPECT_NEAR(eq.theta_var[0], eq.kB, 0.2 * eq.kB);
  EXPECT_LT(eq.tv_gap, 0.1);
}

TEST(Equilibrium, ZeroNoiseCollapses) {
  QuadraticTask task;
  task.noise_variance = 0.0;
  task.start = {1.0};
  LongRunConfig cfg;
  cfg.sgd = SgdConfig{0.01, 1.0, 40000};
  auto eq = equilibrium_check(task, cfg);
  EXPECT_EQ(eq.kB, 0.0);
  EXPECT_LT(std::abs(eq.theta_mean[0]), 1e-30);
  cfg.kB_override = 0.01;
  eq = equilibrium_check(task, cfg);
  EXPECT_GT(eq.tv_gap, 0.85);
}

TEST(Equilibrium, Errors) {
  QuadraticTask task;
  task.start = {0.0, 0.0, 0.0};
  EXPECT_THROW(equilibrium_check(task, LongRunConfig{}), InvalidArgument);
  QuadraticTask slow;
  slow.start = {50.0};
  slow.noise_variance = 1e-6;
  LongRunConfig cfg;
  cfg.sgd = SgdConfig{1e-4, 1.0, 2000};
  EXPECT_THROW(equilibrium_check(slow, cfg), BurnInError);
}

TEST(Fig3, SmallRunIsDeterministicAcrossThreads) {
  Fig3Config cfg;
  cfg.batch_sizes = {1, 10};
  cfg.trials = 3;
  cfg.steps = 12;
  cfg.hidden = {5};
  cfg.tracked_components = 30;
  cfg.max_lag = 3;
  cfg.trace_trials = 2;
  const auto data = tiny_images(60, 2);
  const auto a = fig3_experiment(cfg, data);
  cfg.threads = 2;
  const auto b = fig3_experiment(cfg, data);
  ASSERT_EQ(a.scenarios.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(a.scenarios[i].stats.variance_avg, b.scenarios[i].stats.variance_avg);
    EXPECT_EQ(a.scenarios[i].acc_mean, b.scenarios[i].acc_mean);
    EXPECT_EQ(a.scenarios[i].traces, b.scenarios[i].traces);
    EXPECT_EQ(a.scenarios[i].acc_mean.size(), cfg.steps + 1);
  }
  EXPECT_EQ(a.dim, ClassifierObjective::param_count(a.layers));
}
