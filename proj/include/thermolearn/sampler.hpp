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

#ifndef THERMOLEARN_SAMPLER_HPP
#define THERMOLEARN_SAMPLER_HPP

#include <chrono>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "thermolearn/data.hpp"
#include "thermolearn/errors.hpp"
#include "thermolearn/model.hpp"
#include "thermolearn/numeric.hpp"
#include "thermolearn/optimizer.hpp"
#include "thermolearn/parallel.hpp"
#include "thermolearn/rng.hpp"
#include "thermolearn/thermo.hpp"

namespace thermolearn {

enum class Proposal {
  single_flip,  // flip one uniformly chosen bit (binary spaces)
  uniform,      // jump to a uniformly chosen different state
};

inline Proposal default_proposal(const StateSpace& space) {
  return space.kind() == SpaceKind::spin_grid ? Proposal::single_flip : Proposal::uniform;
}

/// tau sampler steps run between consecutive parameter updates.
struct ChainConfig {
  std::size_t tau = 1;
  Proposal proposal = Proposal::uniform;
  Seed seed = 0;

  void validate(const StateSpace& space) const {
    if (tau < 1) throw InvalidParameter("tau must be >= 1");
    if (proposal == Proposal::single_flip && space.kind() == SpaceKind::categorical)
      throw InvalidParameter("single_flip proposals need a binary state space");
  }
};

/// Metropolis sampler for exp(-phi) with a symmetric proposal. Energies of an
/// enumerable space are tabulated once per model.
class Metropolis {
 public:
  Metropolis(const Ppm& model, Proposal proposal) : model_(&model), proposal_(proposal) {
    if (model.space().enumerable()) {
      table_.resize(model.space().size());
      for (std::size_t x = 0; x < table_.size(); ++x) table_[x] = model.energy(static_cast<State>(x));
    }
  }

  double energy(State x) const { return table_.empty() ? model_->energy(x) : table_[x]; }

  State propose(State x, Rng& rng) const {
    const auto& space = model_->space();
    if (proposal_ == Proposal::single_flip) {
      if (space.kind() == SpaceKind::two_state) return x ^ 1U;
      return x ^ (State{1} << rng.below(static_cast<std::uint64_t>(space.arity())));
    }
    const auto r = static_cast<State>(rng.below(space.size() - 1));
    return r < x ? r : r + 1;
  }

  /// One Metropolis step: accept x' with probability min(1, exp(phi(x) - phi(x'))).
  State step(State x, Rng& rng) const {
    const State y = propose(x, rng);
    const double delta = energy(x) - energy(y);
    if (delta >= 0.0) return y;
    return rng.uniform() < std::exp(delta) ? y : x;
  }

 private:
  const Ppm* model_;
  Proposal proposal_;
  std::vector<double> table_;
};

/// States visited after each of `steps` Metropolis steps from x0.
inline std::vector<State> metropolis_chain(const Ppm& model, State x0, std::size_t steps, const ChainConfig& cfg) {
  if (steps < 1) throw InvalidArgument("metropolis_chain needs steps >= 1");
  cfg.validate(model.space());
  model.space().check(x0);
  Metropolis kernel(model, cfg.proposal);
  Rng rng(cfg.seed);
  std::vector<State> out(steps);
  State x = x0;
  for (auto& s : out) s = x = kernel.step(x, rng);
  return out;
}

/// Exact transition matrix k[x][x'] of the Metropolis kernel.
inline std::vector<std::vector<double>> transition_kernel(const Ppm& model, Proposal proposal) {
  const auto& space = model.space();
  if (!space.enumerable()) throw CapacityError("transition_kernel needs an enumerable space");
  const std::size_t n = space.size();
  std::vector<std::vector<double>> k(n, std::vector<double>(n, 0.0));
  std::vector<double> e(n);
  for (std::size_t x = 0; x < n; ++x) e[x] = model.energy(static_cast<State>(x));
  for (std::size_t x = 0; x < n; ++x) {
    std::vector<std::pair<std::size_t, double>> moves;
    if (proposal == Proposal::single_flip) {
      const int bits = space.kind() == SpaceKind::two_state ? 1 : space.arity();
      for (int i = 0; i < bits; ++i) moves.emplace_back(x ^ (std::size_t{1} << i), 1.0 / bits);
    } else {
      for (std::size_t y = 0; y < n; ++y)
        if (y != x) moves.emplace_back(y, 1.0 / static_cast<double>(n - 1));
    }
    double leave = 0.0;
    for (const auto& [y, q] : moves) {
      const double a = std::min(1.0, std::exp(e[x] - e[y]));
      k[x][y] += q * a;
      leave += q * a;
    }
    k[x][x] += 1.0 - leave;
  }
  return k;
}

inline double total_variation(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("total_variation: length mismatch");
  std::vector<double> d(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) d[i] = std::abs(p[i] - q[i]);
  return 0.5 * pairwise_sum(d);
}

// ---------------------------------------------------------------------------
// Lagged bipartite dynamics: one parameter update, then tau sampler steps
// under the new parameters. x and theta never move in the same micro-step.

struct MicroEvent {
  enum class Kind { parameter_update, sampler_step };
  Kind kind = Kind::sampler_step;
  State x_before = 0;
  State x_after = 0;
  bool theta_changed = false;
};

struct BipartiteRun {
  TrajectoryLog log;
  std::vector<State> coarse_samples;  // x at t_0, t_1, ..., t_n
  std::vector<MicroEvent> micro;      // only when requested
};

template <Trainable Objective>
BipartiteRun run_bipartite(Objective obj, BatchStream& stream, const SgdConfig& sgd, const ChainConfig& chain,
                           State x0, bool record_micro = false) {
  const auto& space = obj.model().space();
  chain.validate(space);
  space.check(x0);
  Rng rng(chain.seed);
  BipartiteRun run;
  run.log.theta0 = obj.theta();
  run.coarse_samples.push_back(x0);
  State x = x0;
  for (std::size_t t = 0; t < sgd.steps; ++t) {
    auto rec = sgd_step(obj, stream.next_batch(), sgd, static_cast<long>(t + 1));
    if (record_micro)
      run.micro.push_back({MicroEvent::Kind::parameter_update, x, x, rec.theta_after != rec.theta_before});
    obj = obj.with_theta(rec.theta_after);
    run.log.steps.push_back(std::move(rec));
    Metropolis kernel(obj.model(), chain.proposal);
    for (std::size_t s = 0; s < chain.tau; ++s) {
      const State y = kernel.step(x, rng);
      if (record_micro) run.micro.push_back({MicroEvent::Kind::sampler_step, x, y, false});
      x = y;
    }
    run.coarse_samples.push_back(x);
  }
  return run;
}

/// Fixed task for a relaxation-time sweep. For each of `seeds` parameter
/// paths, `replicas` independent chains are run along it; the coarse-tick
/// empirical law over replicas is compared with the exact p(.|theta_t).
struct TauSweepTask {
  Ppm model0 = Ppm::two_state(0.0);
  std::shared_ptr<const Dataset> data;
  SgdConfig sgd;
  std::size_t batch_size = 1;
  std::size_t seeds = 20;
  std::size_t replicas = 128;
  Seed base_seed = 0;
  State x0 = 0;
  std::size_t threads = 1;
};

struct TauSweepResult {
  std::vector<std::size_t> taus;
  std::vector<double> tv_mean;
  std::vector<double> tv_std;
  std::vector<double> ep_bound;  // exact conditional EP of the realized theta path (seed mean)
  std::vector<double> wallclock_per_step;  // seconds per parameter update; not reproducible
};

inline TauSweepResult tau_sweep(const TauSweepTask& task, const std::vector<std::size_t>& taus) {
  if (taus.empty()) throw InvalidArgument("tau_sweep needs at least one tau");
  for (std::size_t i = 1; i < taus.size(); ++i)
    if (taus[i] <= taus[i - 1]) throw InvalidArgument("taus must be strictly ascending");
  if (task.seeds < 1 || task.replicas < 1) throw InvalidArgument("tau_sweep needs seeds and replicas >= 1");
  const auto& space = task.model0.space();
  const std::size_t n_states = space.size();
  TauSweepResult res;
  res.taus = taus;
  for (std::size_t tau : taus) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<double> tv_seed(task.seeds), ep_seed(task.seeds);
    parallel_for(task.seeds, task.threads, [&](std::size_t s) {
      const Seed path_seed = derive_seed(task.base_seed, s);
      std::vector<std::vector<double>> counts(task.sgd.steps + 1, std::vector<double>(n_states, 0.0));
      std::vector<std::vector<double>> thetas;
      for (std::size_t r = 0; r < task.replicas; ++r) {
        BatchStream stream(task.data, task.batch_size, path_seed);
        ChainConfig chain{tau, default_proposal(space), derive_seed(path_seed, r + 1)};
        auto run = run_bipartite(PpmObjective(task.model0, task.data), stream, task.sgd, chain, task.x0);
        for (std::size_t i = 0; i < run.coarse_samples.size(); ++i) counts[i][run.coarse_samples[i]] += 1.0;
        if (r == 0) thetas = run.log.thetas();
      }
      std::vector<double> tv_ticks;
      std::vector<Ppm> path;
      for (std::size_t i = 0; i < thetas.size(); ++i) path.push_back(task.model0.with_theta(thetas[i]));
      for (std::size_t i = 1; i < thetas.size(); ++i) {
        for (double& c : counts[i]) c /= static_cast<double>(task.replicas);
        tv_ticks.push_back(total_variation(counts[i], exact_dist(path[i]).probs()));
      }
      tv_seed[s] = mean(tv_ticks);
      ep_seed[s] = path.size() >= 2 ? accumulate(path).ep_cond_total : 0.0;
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    res.tv_mean.push_back(mean(tv_seed));
    res.tv_std.push_back(sample_std(tv_seed));
    res.ep_bound.push_back(mean(ep_seed));
    const double updates = static_cast<double>(task.seeds * task.replicas * std::max<std::size_t>(task.sgd.steps, 1));
    res.wallclock_per_step.push_back(secs / updates);
  }
  return res;
}

}  // namespace thermolearn

#endif  // THERMOLEARN_SAMPLER_HPP
