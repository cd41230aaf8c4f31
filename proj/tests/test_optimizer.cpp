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

#include "thermolearn/classifier.hpp"
#include "thermolearn/optimizer.hpp"

using namespace thermolearn;

namespace {
const double kLn3 = std::log(3.0);

// phi = -theta * x, so the NLL gradient is <x>_model - <x>_batch.
Ppm moment_two_state(double theta) {
  return Ppm::linear(StateSpace::two_state(), {Feature::parse("bit:0")}, {theta});
}

std::shared_ptr<const Dataset> states(std::vector<State> xs) {
  return std::make_shared<const Dataset>(Dataset::of_states(std::move(xs), {}));
}

std::vector<std::size_t> all_ids(std::size_t n) {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

Ppm random_spin_grid(int m, Rng& rng) {
  std::vector<double> th(Ppm::spin_grid_features(m).size());
  for (auto& v : th) v = rng.normal();
  return Ppm::spin_grid(m, th);
}
}  // namespace

TEST(NllLoss, Oracles) {
  const std::vector<State> mixed{0, 1, 1, 0, 1};
  EXPECT_NEAR(nll_loss(Ppm::two_state(0.0), mixed), std::log(2.0), 1e-15);
  const std::vector<State> one{1};
  EXPECT_NEAR(nll_loss(Ppm::two_state(kLn3), one), -std::log(0.25), 1e-14);
  EXPECT_NEAR(nll_loss(Ppm::two_state(kLn3), one), 1.3863, 1e-4);
  const std::vector<State> same(7, 1);
  EXPECT_NEAR(nll_loss(Ppm::two_state(kLn3), same), nll_loss(Ppm::two_state(kLn3), one), 1e-15);
  EXPECT_THROW(nll_loss(Ppm::two_state(0.0), std::vector<State>{}), InvalidArgument);
}

TEST(GradNll, MomentMatchingOracle) {
  const std::vector<State> ones(4, 1);
  EXPECT_NEAR(grad_nll(moment_two_state(0.0), ones)[0], -0.5, 1e-15);
  // theta = ln3 under phi = theta x gives p(1) = 0.25; a batch with one 1 in four matches it
  const std::vector<State> matched{0, 0, 0, 1};
  EXPECT_NEAR(grad_nll(Ppm::two_state(kLn3), matched)[0], 0.0, 1e-15);
}

TEST(GradNll, FiniteDifference) {
  Rng rng(21);
  const double h = 1e-5;
  for (int trial = 0; trial < 30; ++trial) {
    const auto model = random_spin_grid(2 + static_cast<int>(rng.below(4)), rng);
    std::vector<State> batch(5);
    for (auto& x : batch) x = rng.below(model.space().size());
    const auto g = grad_nll(model, batch);
    for (std::size_t a = 0; a < model.dim(); ++a) {
      auto up = model.theta(), dn = model.theta();
      up[a] += h;
      dn[a] -= h;
      const double fd = (nll_loss(model.with_theta(up), batch) - nll_loss(model.with_theta(dn), batch)) / (2 * h);
      EXPECT_NEAR(g[a], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST(SgdStep, FullBatchHasZeroNoise) {
  const auto data = states({0, 1, 1, 0, 1, 1});
  const PpmObjective obj(Ppm::two_state(0.3), data);
  const auto rec = sgd_step(obj, all_ids(6), SgdConfig{0.1, 1.0, 1});
  for (double e : rec.eta) EXPECT_EQ(e, 0.0);
  const auto again = sgd_step(obj, all_ids(6), SgdConfig{0.1, 1.0, 1});
  EXPECT_EQ(rec.theta_after, again.theta_after);
}

TEST(SgdStep, ZeroRateAndOracleStep) {
  const auto data = states({1, 1, 1});
  const PpmObjective obj(moment_two_state(0.0), data);
  EXPECT_EQ(sgd_step(obj, {0, 1}, SgdConfig{0.0, 1.0, 1}).theta_after, obj.theta());
  const auto rec = sgd_step(obj, {0, 1, 2}, SgdConfig{0.1, 1.0, 1});
  EXPECT_NEAR(rec.theta_after[0], 0.05, 1e-16);
  EXPECT_THROW(sgd_step(obj, {0}, SgdConfig{-0.1, 1.0, 1}), InvalidParameter);
}

TEST(SgdStep, DivergenceCarriesTIndex) {
  const auto data = states({1});
  const PpmObjective obj(moment_two_state(0.0), data);
  try {
    sgd_step(obj, {0}, SgdConfig{1e8, 1.0, 1}, 17);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.t_index(), 17);
  }
}

TEST(Langevin, IdentityHoldsPerStep) {
  Rng rng(3);
  const auto target = random_spin_grid(4, rng);
  const auto data = std::make_shared<const Dataset>(make_synthetic(target, 500, 4));
  const SgdConfig cfg{0.05, 0.5, 200};
  BatchStream stream(data, 8, 5);
  const auto log = train(PpmObjective(random_spin_grid(4, rng), data), stream, cfg);
  for (const auto& rec : log.steps) {
    const auto terms = langevin_view(rec, cfg);
    for (std::size_t i = 0; i < rec.eta.size(); ++i) {
      const double lhs = (rec.theta_after[i] - rec.theta_before[i]) / cfg.alpha;
      EXPECT_NEAR(lhs, terms.drift[i] + terms.noise[i], 1e-12);
    }
  }
}

TEST(Langevin, FullBatchNoiseIsZero) {
  const auto data = states({0, 1, 1});
  const SgdConfig cfg{0.01, 1.0, 1};
  const auto rec = sgd_step(PpmObjective(Ppm::two_state(0.1), data), all_ids(3), cfg);
  const auto terms = langevin_view(rec, cfg);
  EXPECT_EQ(terms.noise[0], 0.0);
  EXPECT_NEAR(terms.drift[0] * cfg.alpha, rec.theta_after[0] - rec.theta_before[0], 1e-17);
  EXPECT_DOUBLE_EQ(cfg.mobility(), 0.01);
}

TEST(Eta, ZeroMeanOverBatchDraws) {
  Rng rng(12);
  const auto target = random_spin_grid(3, rng);
  const auto data = std::make_shared<const Dataset>(make_synthetic(target, 200, 13));
  const PpmObjective obj(random_spin_grid(3, rng), data);
  BatchStream stream(data, 4, 14);
  const std::size_t draws = 10000, dim = obj.theta().size();
  std::vector<double> sum(dim, 0.0), sq(dim, 0.0);
  const auto full = obj.full_gradient();
  for (std::size_t k = 0; k < draws; ++k) {
    const auto g = obj.batch_gradient(stream.next_batch());
    for (std::size_t i = 0; i < dim; ++i) {
      const double e = full[i] - g[i];
      sum[i] += e;
      sq[i] += e * e;
    }
  }
  for (std::size_t i = 0; i < dim; ++i) {
    const double m = sum[i] / draws;
    const double se = std::sqrt((sq[i] / draws - m * m) / draws);
    EXPECT_LE(std::abs(m), 5.0 * se) << "component " << i;
  }
}

TEST(Backward, ZeroRateIsIdentity) {
  const auto data = states({0, 1});
  const PpmObjective obj(Ppm::two_state(0.4), data);
  EXPECT_EQ(backward_sgd_step(obj, {0, 1}, SgdConfig{0.0, 1.0, 1}), obj.theta());
}

TEST(Backward, FrozenMomentsInvertExactly) {
  Rng rng(31);
  const auto model0 = random_spin_grid(4, rng);
  const auto data = std::make_shared<const Dataset>(make_synthetic(random_spin_grid(4, rng), 300, 32));
  FrozenMomentsObjective obj(model0, model0, data);
  const SgdConfig cfg{0.01, 1.0, 1};
  BatchStream stream(data, 5, 33);
  for (int t = 0; t < 200; ++t) {
    const auto batch = stream.next_batch();
    const auto rec = sgd_step(obj, batch, cfg);
    const auto after = obj.with_theta(rec.theta_after);
    // the surrogate gradient does not depend on theta
    EXPECT_EQ(after.batch_gradient(batch), rec.grad_batch);
    const auto dagger = backward_sgd_step(after, batch, cfg);
    for (std::size_t i = 0; i < dagger.size(); ++i)
      EXPECT_NEAR(dagger[i], rec.theta_before[i], 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(rec.theta_before[i])));
    obj = after;
  }
}

TEST(Classifier, GradientMatchesFiniteDifference) {
  const auto sc = make_synthetic_classes(20, 3, 4, 4, 2);
  const auto data = std::make_shared<const Dataset>(to_dataset(sc, 2));
  const std::vector<int> layers{16, 5, 3};
  const ClassifierObjective obj(layers, ClassifierObjective::initial_theta(layers, 3), data);
  const std::vector<std::size_t> ids{0, 3, 7, 7, 12};
  const auto g = obj.batch_gradient(ids);
  ASSERT_EQ(g.size(), ClassifierObjective::param_count(layers));
  Rng rng(4);
  for (int k = 0; k < 40; ++k) {
    const auto a = static_cast<std::size_t>(rng.below(g.size()));
    auto up = obj.theta(), dn = obj.theta();
    up[a] += 1e-6;
    dn[a] -= 1e-6;
    const double fd = (obj.with_theta(up).loss(ids) - obj.with_theta(dn).loss(ids)) / 2e-6;
    EXPECT_NEAR(g[a], fd, 1e-7);
  }
  const auto full = obj.full_gradient();
  const auto all = obj.batch_gradient(all_ids(20));
  for (std::size_t a = 0; a < full.size(); ++a) EXPECT_NEAR(full[a], all[a], 1e-14);
}

TEST(Trajectory, JsonlIsDeterministic) {
  const auto data = std::make_shared<const Dataset>(make_synthetic(Ppm::two_state(kLn3), 100, 1));
  auto run = [&] {
    BatchStream stream(data, 3, 9);
    std::ostringstream out;
    write_trajectory_jsonl(out, train(PpmObjective(Ppm::two_state(0.0), data), stream, SgdConfig{0.1, 1.0, 20}),
                           geometric_grid(20));
    return out.str();
  };
  EXPECT_EQ(run(), run());
}

TEST(GeometricGrid, Endpoints) {
  EXPECT_EQ(geometric_grid(10), (std::vector<std::size_t>{0, 1, 2, 4, 8, 10}));
  EXPECT_EQ(geometric_grid(0), (std::vector<std::size_t>{0}));
}
