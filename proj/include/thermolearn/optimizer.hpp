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

#ifndef THERMOLEARN_OPTIMIZER_HPP
#define THERMOLEARN_OPTIMIZER_HPP

#include <cmath>
#include <concepts>
#include <cstddef>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "thermolearn/data.hpp"
#include "thermolearn/errors.hpp"
#include "thermolearn/model.hpp"
#include "thermolearn/numeric.hpp"

namespace thermolearn {

/// Parameters beyond this magnitude abort a run as divergent.
inline constexpr double kDivergenceBound = 1e6;

/// Vanilla SGD. `alpha` is the time attached to one parameter update, so the
/// mobility is mu = r / alpha.
struct SgdConfig {
  double learning_rate = 0.01;
  double alpha = 1.0;
  std::size_t steps = 100;

  double mobility() const noexcept { return learning_rate / alpha; }

  void validate() const {
    if (!std::isfinite(learning_rate) || learning_rate < 0.0)
      throw InvalidParameter("learning_rate must be finite and >= 0");
    if (!std::isfinite(alpha) || alpha <= 0.0) throw InvalidParameter("alpha must be finite and > 0");
  }
};

/// One optimizer update. eta = grad_full - grad_batch.
struct StepRecord {
  long t_index = 0;
  std::vector<double> theta_before;
  std::vector<double> theta_after;
  std::vector<std::size_t> batch_ids;
  std::vector<double> grad_batch;
  std::vector<double> grad_full;
  std::vector<double> eta;
  double loss = 0.0;  // mini-batch loss at theta_before
};

/// Anything SGD can drive: a parameter vector, mini-batch and full-dataset
/// gradients of the loss, and rebinding to new parameters.
template <class T>
concept Trainable = requires(const T& obj, const std::vector<std::size_t>& ids, std::vector<double> theta) {
  { obj.theta() } -> std::convertible_to<const std::vector<double>&>;
  { obj.loss(ids) } -> std::convertible_to<double>;
  { obj.batch_gradient(ids) } -> std::same_as<std::vector<double>>;
  { obj.full_gradient() } -> std::same_as<std::vector<double>>;
  { obj.with_theta(std::move(theta)) } -> std::same_as<T>;
};

// ---------------------------------------------------------------------------
// Negative log-likelihood of an enumerable PPM.

inline double nll_loss(const Ppm& model, std::span<const State> batch) {
  if (batch.empty()) throw InvalidArgument("nll_loss: empty batch");
  const auto dist = exact_dist(model);
  std::vector<double> terms(batch.size());
  for (std::size_t k = 0; k < batch.size(); ++k) terms[k] = -dist.log_probs.at(batch[k]);
  return mean(terms);
}

namespace detail {

// Mean of d(phi)/d(theta) over a multiset of states, grouped by state so the
// cost scales with distinct states.
inline std::vector<double> batch_energy_gradient(const Ppm& model, std::span<const State> batch) {
  std::map<State, std::size_t> counts;
  for (State x : batch) ++counts[x];
  std::vector<double> out(model.dim(), 0.0);
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& [x, c] : counts) {
    const auto g = model.energy_gradient(x);
    const double w = static_cast<double>(c) * inv;
    for (std::size_t a = 0; a < out.size(); ++a) out[a] += w * g[a];
  }
  return out;
}

}  // namespace detail

/// Exact gradient of nll_loss: <d phi>_batch - <d phi>_model. For linear
/// features this is <f>_model - <f>_batch.
inline std::vector<double> grad_nll(const Ppm& model, std::span<const State> batch) {
  if (batch.empty()) throw InvalidArgument("grad_nll: empty batch");
  auto g = detail::batch_energy_gradient(model, batch);
  const auto model_moments = energy_gradient_mean(model, exact_dist(model));
  for (std::size_t a = 0; a < g.size(); ++a) g[a] -= model_moments[a];
  return g;
}

/// NLL objective of a PPM over a state dataset.
class PpmObjective {
 public:
  PpmObjective(Ppm model, std::shared_ptr<const Dataset> data) : model_(std::move(model)), data_(std::move(data)) {
    if (!data_ || data_->labeled()) throw InvalidArgument("PpmObjective needs a state dataset");
    auto stats = std::make_shared<DataStats>();
    std::map<State, std::size_t> counts;
    for (State x : data_->states()) ++counts[x];
    const double inv = 1.0 / static_cast<double>(data_->size());
    for (const auto& [x, c] : counts) stats->histogram.emplace_back(x, static_cast<double>(c) * inv);
    // linear energies have theta-independent d(phi)/d(theta)
    if (model_.form() == EnergyForm::linear_features) stats->linear_moments = weighted_gradient(model_, stats->histogram);
    stats_ = std::move(stats);
  }

  const std::vector<double>& theta() const noexcept { return model_.theta(); }
  const Ppm& model() const noexcept { return model_; }
  const Dataset& data() const noexcept { return *data_; }

  double loss(const std::vector<std::size_t>& ids) const { return nll_loss(model_, batch_states(*data_, ids)); }

  std::vector<double> batch_gradient(const std::vector<std::size_t>& ids) const {
    return grad_nll(model_, batch_states(*data_, ids));
  }

  /// Gradient of U_B, the NLL over the whole dataset.
  std::vector<double> full_gradient() const {
    auto g = stats_->linear_moments.empty() ? weighted_gradient(model_, stats_->histogram) : stats_->linear_moments;
    const auto model_moments = energy_gradient_mean(model_, exact_dist(model_));
    for (std::size_t a = 0; a < g.size(); ++a) g[a] -= model_moments[a];
    return g;
  }

  /// U_B(theta).
  double full_loss() const {
    const auto dist = exact_dist(model_);
    std::vector<double> terms;
    for (const auto& [x, w] : stats_->histogram) terms.push_back(-w * dist.log_probs[x]);
    return pairwise_sum(terms);
  }

  PpmObjective with_theta(std::vector<double> theta) const {
    PpmObjective o = *this;
    o.model_ = model_.with_theta(std::move(theta));
    return o;
  }

 private:
  struct DataStats {
    std::vector<std::pair<State, double>> histogram;
    std::vector<double> linear_moments;
  };

  static std::vector<double> weighted_gradient(const Ppm& model, const std::vector<std::pair<State, double>>& hist) {
    std::vector<double> out(model.dim(), 0.0);
    for (const auto& [x, w] : hist) {
      const auto g = model.energy_gradient(x);
      for (std::size_t a = 0; a < out.size(); ++a) out[a] += w * g[a];
    }
    return out;
  }

  Ppm model_;
  std::shared_ptr<const Dataset> data_;
  std::shared_ptr<const DataStats> stats_;
};

/// NLL gradient with the model moments frozen at a reference model. The
/// gradient is then independent of theta for linear features, which is the
/// lazy regime where backward SGD retraces the forward path.
class FrozenMomentsObjective {
 public:
  FrozenMomentsObjective(Ppm model, const Ppm& reference, std::shared_ptr<const Dataset> data)
      : model_(std::move(model)),
        frozen_(std::make_shared<const std::vector<double>>(energy_gradient_mean(reference, exact_dist(reference)))),
        data_(std::move(data)) {}

  const std::vector<double>& theta() const noexcept { return model_.theta(); }
  const Ppm& model() const noexcept { return model_; }

  double loss(const std::vector<std::size_t>& ids) const { return nll_loss(model_, batch_states(*data_, ids)); }

  std::vector<double> batch_gradient(const std::vector<std::size_t>& ids) const {
    return surrogate(batch_states(*data_, ids));
  }

  std::vector<double> full_gradient() const { return surrogate(data_->states()); }

  FrozenMomentsObjective with_theta(std::vector<double> theta) const {
    FrozenMomentsObjective o = *this;
    o.model_ = model_.with_theta(std::move(theta));
    return o;
  }

 private:
  std::vector<double> surrogate(std::span<const State> batch) const {
    auto g = detail::batch_energy_gradient(model_, batch);
    for (std::size_t a = 0; a < g.size(); ++a) g[a] -= (*frozen_)[a];
    return g;
  }

  Ppm model_;
  std::shared_ptr<const std::vector<double>> frozen_;
  std::shared_ptr<const Dataset> data_;
};

// ---------------------------------------------------------------------------

/// theta_{t+1} = theta_t - r * grad_batch, with grad_full and eta recorded.
template <Trainable Objective>
StepRecord sgd_step(const Objective& obj, const std::vector<std::size_t>& batch, const SgdConfig& cfg,
                    long t_index = 0) {
  cfg.validate();
  StepRecord rec;
  rec.t_index = t_index;
  rec.theta_before = obj.theta();
  rec.batch_ids = batch;
  rec.loss = obj.loss(batch);
  rec.grad_batch = obj.batch_gradient(batch);
  rec.grad_full = obj.full_gradient();
  const std::size_t dim = rec.theta_before.size();
  rec.theta_after.resize(dim);
  rec.eta.resize(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    if (!std::isfinite(rec.grad_batch[i]) || !std::isfinite(rec.grad_full[i]))
      throw DivergenceError("non-finite gradient", t_index);
    rec.theta_after[i] = rec.theta_before[i] - cfg.learning_rate * rec.grad_batch[i];
    rec.eta[i] = rec.grad_full[i] - rec.grad_batch[i];
    if (!(std::abs(rec.theta_after[i]) <= kDivergenceBound))
      throw DivergenceError("parameter magnitude exceeded 1e6", t_index);
  }
  return rec;
}

struct LangevinTerms {
  std::vector<double> drift;  // -mu * grad U_B
  std::vector<double> noise;  // mu * eta
};

/// Splits an update into (theta_after - theta_before) / alpha = drift + noise.
inline LangevinTerms langevin_view(const StepRecord& rec, const SgdConfig& cfg) {
  const double mu = cfg.mobility();
  LangevinTerms out{std::vector<double>(rec.grad_full.size()), std::vector<double>(rec.eta.size())};
  for (std::size_t i = 0; i < out.drift.size(); ++i) {
    out.drift[i] = -mu * rec.grad_full[i];
    out.noise[i] = mu * rec.eta[i];
  }
  return out;
}

/// Time-reversed step: theta_dagger = theta_after + r * grad at theta_after
/// on the same batch.
template <Trainable Objective>
std::vector<double> backward_sgd_step(const Objective& after, const std::vector<std::size_t>& batch,
                                      const SgdConfig& cfg) {
  cfg.validate();
  const auto g = after.batch_gradient(batch);
  auto theta = after.theta();
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += cfg.learning_rate * g[i];
  return theta;
}

// ---------------------------------------------------------------------------

/// Ordered record of one training run.
struct TrajectoryLog {
  std::vector<double> theta0;
  std::vector<StepRecord> steps;

  /// theta_0, theta_1, ..., theta_n.
  std::vector<std::vector<double>> thetas() const {
    std::vector<std::vector<double>> out{theta0};
    for (const auto& s : steps) out.push_back(s.theta_after);
    return out;
  }
};

/// Runs cfg.steps SGD updates drawing batches from `stream`.
template <Trainable Objective>
TrajectoryLog train(Objective obj, BatchStream& stream, const SgdConfig& cfg) {
  TrajectoryLog log;
  log.theta0 = obj.theta();
  log.steps.reserve(cfg.steps);
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    auto rec = sgd_step(obj, stream.next_batch(), cfg, static_cast<long>(t + 1));
    obj = obj.with_theta(rec.theta_after);
    log.steps.push_back(std::move(rec));
  }
  return log;
}

/// Geometric snapshot grid {0, 1, 2, 4, ..., n}; always contains 0 and n.
inline std::vector<std::size_t> geometric_grid(std::size_t n) {
  std::set<std::size_t> g{0, n};
  for (std::size_t t = 1; t < n; t *= 2) g.insert(t);
  return {g.begin(), g.end()};
}

inline double l2_norm(std::span<const double> v) {
  std::vector<double> sq(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) sq[i] = v[i] * v[i];
  return std::sqrt(pairwise_sum(sq));
}

/// JSON-lines trajectory: a t=0 line with theta, then one line per step with
/// {t, loss, grad_batch_norm, grad_full_norm, eta} and theta_after only where
/// t is on the snapshot grid (t = n always included).
inline void write_trajectory_jsonl(std::ostream& out, const TrajectoryLog& log,
                                   const std::vector<std::size_t>& snapshot_grid) {
  const std::set<std::size_t> grid(snapshot_grid.begin(), snapshot_grid.end());
  nlohmann::json head{{"t", 0}, {"theta", log.theta0}};
  out << head.dump() << '\n';
  for (std::size_t k = 0; k < log.steps.size(); ++k) {
    const auto& s = log.steps[k];
    const std::size_t t = k + 1;
    nlohmann::json line{{"t", t},
                        {"loss", s.loss},
                        {"grad_batch_norm", l2_norm(s.grad_batch)},
                        {"grad_full_norm", l2_norm(s.grad_full)},
                        {"eta", s.eta}};
    if (grid.count(t) != 0 || t == log.steps.size()) line["theta"] = s.theta_after;
    out << line.dump() << '\n';
  }
}

}  // namespace thermolearn

#endif  // THERMOLEARN_OPTIMIZER_HPP
