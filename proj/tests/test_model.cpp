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
#include <numbers>

#include <gtest/gtest.h>

#include "thermolearn/model.hpp"

using namespace thermolearn;

namespace {
const double kLn3 = std::log(3.0);

Ppm random_spin_grid(int m, Rng& rng, double scale = 1.0) {
  std::vector<double> th(Ppm::spin_grid_features(m).size());
  for (auto& v : th) v = scale * rng.normal();
  return Ppm::spin_grid(m, th);
}
}  // namespace

TEST(StateSpace, Sizes) {
  EXPECT_EQ(StateSpace::two_state().size(), 2u);
  EXPECT_EQ(StateSpace::spin_grid(4).size(), 16u);
  EXPECT_EQ(StateSpace::categorical(7).size(), 7u);
  EXPECT_THROW(StateSpace::spin_grid(1), InvalidParameter);
  EXPECT_THROW(StateSpace::categorical(4097), InvalidParameter);
}

TEST(StateSpace, SpinEncoding) {
  const auto s = StateSpace::spin_grid(3);
  EXPECT_EQ(s.spin(0b101, 0), 1);
  EXPECT_EQ(s.spin(0b101, 1), -1);
  EXPECT_EQ(s.spin(0b101, 2), 1);
  EXPECT_EQ(s.encode(0b001), (std::vector<double>{1, -1, -1}));
  EXPECT_THROW(s.check(8), IndexError);
}

TEST(Energy, TwoStateValues) {
  EXPECT_DOUBLE_EQ(Ppm::two_state(0.0).energy(1), 0.0);
  EXPECT_NEAR(Ppm::two_state(kLn3).energy(1), 1.0986, 1e-4);
  EXPECT_DOUBLE_EQ(Ppm::two_state(kLn3).energy(0), 0.0);
}

TEST(Energy, ZeroCouplingsAreFlat) {
  const auto m = Ppm::spin_grid(4, std::vector<double>(8, 0.0));
  for (State x = 0; x < 16; ++x) EXPECT_EQ(m.energy(x), 0.0);
}

TEST(Energy, NonFiniteThetaRejected) {
  EXPECT_THROW(exact_dist(Ppm::two_state(std::nan(""))), InvalidParameter);
  EXPECT_THROW(exact_dist(Ppm::two_state(0.0).with_theta({INFINITY})), InvalidParameter);
}

TEST(ExactDist, TwoStateOracle) {
  auto d = exact_dist(Ppm::two_state(0.0));
  EXPECT_NEAR(d.prob(0), 0.5, 1e-15);
  d = exact_dist(Ppm::two_state(kLn3));
  EXPECT_NEAR(d.prob(0), 0.75, 1e-15);
  EXPECT_NEAR(d.prob(1), 0.25, 1e-15);
}

TEST(ExactDist, CategoricalUniform) {
  const auto space = StateSpace::categorical(4);
  const auto m = Ppm::linear(space, {Feature::parse("onehot:0")}, {0.0});
  for (double p : exact_dist(m).probs()) EXPECT_NEAR(p, 0.25, 1e-15);
}

TEST(ExactDist, CapacityCap) {
  const auto m = Ppm::linear(StateSpace::spin_grid(17), {Feature::parse("spin:0")}, {0.1});
  EXPECT_THROW(exact_dist(m), CapacityError);
  EXPECT_NO_THROW(exact_dist(Ppm::linear(StateSpace::spin_grid(16), {Feature::parse("spin:0")}, {0.1})));
}

TEST(ExactDist, NormalizationAndLogProbs) {
  Rng rng(3);
  for (int m = 2; m <= 10; ++m) {
    const auto model = random_spin_grid(m, rng, 3.0);
    const auto d = exact_dist(model);
    double total = 0.0;
    for (double p : d.probs()) total += p;
    EXPECT_NEAR(total, 1.0, 1e-12);
    for (State x = 0; x < d.log_probs.size(); ++x)
      EXPECT_NEAR(d.log_probs[x], -model.energy(x) - d.log_partition, 1e-12);
  }
}

TEST(ExactDist, LargeThetaDoesNotUnderflow) {
  const auto d = exact_dist(Ppm::two_state(800.0));
  EXPECT_TRUE(std::isfinite(d.log_probs[1]));
  EXPECT_NEAR(d.log_probs[1], -800.0, 1e-9);
}

TEST(Entropy, Oracles) {
  EXPECT_NEAR(entropy(exact_dist(Ppm::two_state(0.0))), std::log(2.0), 1e-15);
  EXPECT_NEAR(entropy(exact_dist(Ppm::two_state(kLn3))), 0.5623, 1e-4);
  const auto delta = ExactDist::from_probs(StateSpace::categorical(3), std::vector<double>{0.0, 1.0, 0.0});
  EXPECT_EQ(entropy(delta), 0.0);
}

TEST(Kl, Oracles) {
  const auto p = exact_dist(Ppm::two_state(0.0));
  const auto q = exact_dist(Ppm::two_state(kLn3));
  EXPECT_EQ(kl(p, p), 0.0);
  EXPECT_NEAR(kl(p, q), 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25), 1e-15);
  EXPECT_NEAR(kl(p, q), 0.1438, 1e-4);
  const auto u = exact_dist(Ppm::spin_grid(3, std::vector<double>(6, 0.0)));
  EXPECT_NEAR(kl(u, u), 0.0, 1e-15);
  EXPECT_THROW(kl(p, u), ShapeError);
}

TEST(Kl, NonNegativeAndGibbsInequality) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 2 + static_cast<int>(rng.below(5));
    const auto p = exact_dist(random_spin_grid(m, rng));
    const auto q = exact_dist(random_spin_grid(m, rng));
    EXPECT_GE(kl(p, q), -1e-12);
    EXPECT_LE(entropy(p), cross_entropy(p, q) + 1e-12);
  }
}

TEST(EnergyMean, Oracles) {
  const auto m = Ppm::two_state(kLn3);
  EXPECT_NEAR(energy_mean(m, exact_dist(Ppm::two_state(0.0))), 0.5 * kLn3, 1e-15);
  EXPECT_NEAR(energy_mean(m, exact_dist(m)), 0.25 * kLn3, 1e-15);
  EXPECT_NEAR(energy_mean(m, exact_dist(m)), 0.2747, 1e-4);
  Rng rng(2);
  const auto zero = Ppm::spin_grid(4, std::vector<double>(8, 0.0));
  EXPECT_EQ(energy_mean(zero, exact_dist(random_spin_grid(4, rng))), 0.0);
  EXPECT_THROW(energy_mean(zero, exact_dist(m)), ShapeError);
}

TEST(EnergyMean, GradientMatchesFiniteDifference) {
  Rng rng(5);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    const auto model = random_spin_grid(4, rng);
    const auto g = mean_energy_gradient(model);
    for (std::size_t a = 0; a < model.dim(); ++a) {
      auto up = model.theta(), dn = model.theta();
      up[a] += h;
      dn[a] -= h;
      const auto mu = model.with_theta(up), md = model.with_theta(dn);
      const double fd = (energy_mean(mu, exact_dist(mu)) - energy_mean(md, exact_dist(md))) / (2 * h);
      EXPECT_NEAR(g[a], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(MlpEnergy, LayoutAndGradient) {
  const auto space = StateSpace::spin_grid(3);
  const std::vector<int> layers{3, 4, 1};
  std::vector<double> theta(3 * 4 + 4 + 4 + 1);
  Rng rng(8);
  for (auto& v : theta) v = rng.normal();
  const auto m = Ppm::mlp(space, layers, theta);
  // hand forward pass: weights row-major then biases, per layer
  for (State x = 0; x < 8; ++x) {
    const auto in = space.encode(x);
    double out = theta[20];
    for (int h = 0; h < 4; ++h) {
      double z = theta[12 + h];
      for (int i = 0; i < 3; ++i) z += theta[h * 3 + i] * in[i];
      out += theta[16 + h] * std::tanh(z);
    }
    EXPECT_NEAR(m.energy(x), out, 1e-12);
    const auto g = m.energy_gradient(x);
    for (std::size_t a = 0; a < theta.size(); ++a) {
      auto up = theta, dn = theta;
      up[a] += 1e-6;
      dn[a] -= 1e-6;
      const double fd = (m.with_theta(up).energy(x) - m.with_theta(dn).energy(x)) / 2e-6;
      EXPECT_NEAR(g[a], fd, 1e-7);
    }
  }
  EXPECT_THROW(Ppm::mlp(space, layers, std::vector<double>(5)), ShapeError);
}

TEST(SampleExact, DeltaAndDeterminism) {
  const auto delta = ExactDist::from_probs(StateSpace::categorical(3), std::vector<double>{0.0, 0.0, 1.0});
  for (State x : sample_exact(delta, 1000, 4)) EXPECT_EQ(x, 2u);
  EXPECT_EQ(sample_exact(Ppm::two_state(0.3), 500, 9), sample_exact(Ppm::two_state(0.3), 500, 9));
  EXPECT_NE(sample_exact(Ppm::two_state(0.3), 500, 9), sample_exact(Ppm::two_state(0.3), 500, 10));
}

TEST(SampleExact, TwoStateFrequency) {
  const auto s = sample_exact(Ppm::two_state(0.0), 100000, 1);
  double ones = 0;
  for (State x : s) ones += x;
  EXPECT_NEAR(ones / 1e5, 0.5, 0.01);
}

TEST(Json, RoundTripIsBitExact) {
  Rng rng(11);
  const auto lin = random_spin_grid(5, rng);
  const auto back = ppm_from_json(nlohmann::json::parse(to_json(lin).dump()));
  EXPECT_EQ(back.theta(), lin.theta());
  EXPECT_EQ(back.space(), lin.space());
  for (State x = 0; x < 32; ++x) EXPECT_EQ(back.energy(x), lin.energy(x));

  std::vector<double> th(2 * 3 + 3 + 3 + 1);
  for (auto& v : th) v = rng.normal() / 3.0;
  const auto mlp = Ppm::mlp(StateSpace::spin_grid(2), {2, 3, 1}, th);
  const auto mlp_back = ppm_from_json(nlohmann::json::parse(to_json(mlp).dump()));
  EXPECT_EQ(mlp_back.theta(), mlp.theta());
  EXPECT_EQ(mlp_back.layers(), mlp.layers());
}

TEST(Feature, ParseAndPrint) {
  for (const char* text : {"bit:0", "-bit:0", "0.5*pair:0:1", "spin:2", "onehot:3", "const"})
    EXPECT_EQ(Feature::parse(text).to_string(), text);
  EXPECT_THROW(Feature::parse("wobble:1"), ValidationError);
}
