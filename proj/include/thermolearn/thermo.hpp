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

#ifndef THERMOLEARN_THERMO_HPP
#define THERMOLEARN_THERMO_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "thermolearn/errors.hpp"
#include "thermolearn/model.hpp"
#include "thermolearn/numeric.hpp"

// Thermodynamic bookkeeping of a learning trajectory p(.|theta_0), p(.|theta_1), ...
// Temperature is 1, so work, heat and entropy are all in nats. Energies are the
// raw phi_theta: W, Q and dE shift under phi -> phi + c, while the entropy
// production and the first-law residual do not. Q > 0 means heat absorbed by X.

namespace thermolearn {

/// Tolerance beyond which a first-law violation is treated as a bug.
inline constexpr double kFirstLawAbort = 1e-8;

struct ThermoStep {
  long t_index = 0;
  double work = 0.0;     // <phi_next - phi_prev>_{p_prev}
  double heat = 0.0;     // <phi_next>_{p_next} - <phi_next>_{p_prev}
  double d_energy = 0.0;  // <phi_next>_{p_next} - <phi_prev>_{p_prev}
  double d_entropy_cond = 0.0;
  double ep_cond = 0.0;  // d_entropy_cond - heat == KL(p_prev || p_next)
};

struct ThermoLedger {
  std::vector<ThermoStep> steps;
  double work_total = 0.0;
  double heat_total = 0.0;
  double d_entropy_cond_total = 0.0;
  double ep_cond_total = 0.0;
  /// Differential entropy of the initialization distribution, when known.
  std::optional<double> s_theta_init;
  /// s_theta_init - heat_total (Clausius: dS[Theta] = -Q); NaN without s_theta_init.
  double m_info_clausius = std::numeric_limits<double>::quiet_NaN();
  /// Largest |dE - (W + Q)| over the steps.
  double first_law_residual = 0.0;
};

inline double step_work(const Ppm& prev, const Ppm& next) {
  require_same_space(prev.space(), next.space(), "step_work");
  const auto p_prev = exact_dist(prev);
  std::vector<double> terms(p_prev.log_probs.size());
  for (std::size_t x = 0; x < terms.size(); ++x) {
    const auto s = static_cast<State>(x);
    terms[x] = std::exp(p_prev.log_probs[x]) * (next.energy(s) - prev.energy(s));
  }
  return pairwise_sum(terms);
}

inline double step_heat(const Ppm& prev, const Ppm& next) {
  require_same_space(prev.space(), next.space(), "step_heat");
  return energy_mean(next, exact_dist(next)) - energy_mean(next, exact_dist(prev));
}

namespace detail {

inline ThermoStep thermo_step(const Ppm& prev, const ExactDist& p_prev, const Ppm& next, const ExactDist& p_next,
                              long t_index) {
  ThermoStep s;
  s.t_index = t_index;
  const double next_on_prev = energy_mean(next, p_prev);
  const double prev_on_prev = energy_mean(prev, p_prev);
  const double next_on_next = energy_mean(next, p_next);
  s.work = next_on_prev - prev_on_prev;
  s.heat = next_on_next - next_on_prev;
  s.d_energy = next_on_next - prev_on_prev;
  s.d_entropy_cond = entropy(p_next) - entropy(p_prev);
  s.ep_cond = s.d_entropy_cond - s.heat;
  return s;
}

}  // namespace detail

/// Conditional entropy production of one step, dS_{X|Theta} - Q. Reduces to
/// KL(p_prev || p_next).
inline double step_conditional_ep(const Ppm& prev, const Ppm& next) {
  require_same_space(prev.space(), next.space(), "step_conditional_ep");
  return detail::thermo_step(prev, exact_dist(prev), next, exact_dist(next), 0).ep_cond;
}

/// Differential entropy of an isotropic Gaussian N(0, std^2 I_dim).
inline double gaussian_entropy(std::size_t dim, double std_dev) {
  return 0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi * std::numbers::e * std_dev * std_dev);
}

/// Incremental ledger: feed snapshots in time order.
class LedgerBuilder {
 public:
  explicit LedgerBuilder(const Ppm& initial, std::optional<double> s_theta_init = std::nullopt, long t0 = 0)
      : prev_(initial), p_prev_(exact_dist(initial)), t_(t0) {
    ledger_.s_theta_init = s_theta_init;
  }

  const ThermoStep& push(const Ppm& next) {
    require_same_space(prev_.space(), next.space(), "accumulate");
    auto p_next = exact_dist(next);
    const auto step = detail::thermo_step(prev_, p_prev_, next, p_next, ++t_);
    const double residual = std::abs(step.d_energy - (step.work + step.heat));
    if (!(residual <= kFirstLawAbort))
      throw ConsistencyError("first law violated by " + format_double(residual) + " at step " + std::to_string(t_));
    ledger_.first_law_residual = std::max(ledger_.first_law_residual, residual);
    ledger_.steps.push_back(step);
    prev_ = next;
    p_prev_ = std::move(p_next);
    return ledger_.steps.back();
  }

  /// Totals are ordered sums over the recorded steps.
  ThermoLedger finish() const {
    ThermoLedger out = ledger_;
    const std::size_t n = out.steps.size();
    std::vector<double> w(n), q(n), ds(n), ep(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = out.steps[i].work;
      q[i] = out.steps[i].heat;
      ds[i] = out.steps[i].d_entropy_cond;
      ep[i] = out.steps[i].ep_cond;
    }
    out.work_total = pairwise_sum(w);
    out.heat_total = pairwise_sum(q);
    out.d_entropy_cond_total = pairwise_sum(ds);
    out.ep_cond_total = pairwise_sum(ep);
    if (out.s_theta_init) out.m_info_clausius = *out.s_theta_init - out.heat_total;
    return out;
  }

 private:
  Ppm prev_;
  ExactDist p_prev_;
  long t_;
  ThermoLedger ledger_;
};

inline ThermoLedger accumulate(std::span<const Ppm> trajectory, std::optional<double> s_theta_init = std::nullopt) {
  if (trajectory.size() < 2) throw InvalidArgument("accumulate needs at least two snapshots");
  LedgerBuilder builder(trajectory.front(), s_theta_init);
  for (std::size_t i = 1; i < trajectory.size(); ++i) builder.push(trajectory[i]);
  return builder.finish();
}

/// Heat along one sample path: sum_i phi_{theta_i}(x_i) - phi_{theta_i}(x_{i-1}).
/// With x_i drawn fresh from p(.|theta_i) its mean is the partially averaged
/// heat (the ledger's heat_total), with the same sign.
inline double stochastic_heat(std::span<const State> samples, std::span<const Ppm> models) {
  if (samples.size() != models.size())
    throw ShapeError("stochastic_heat: " + std::to_string(samples.size()) + " samples for " +
                     std::to_string(models.size()) + " models");
  std::vector<double> terms;
  terms.reserve(samples.size());
  for (std::size_t i = 1; i < samples.size(); ++i)
    terms.push_back(models[i].energy(samples[i]) - models[i].energy(samples[i - 1]));
  return pairwise_sum(terms);
}

/// Header: t,W,Q,dE,dS_cond,ep_cond,W_cum,Q_cum,ep_cum (cumulative columns
/// are running sums in step order).
inline std::vector<std::vector<double>> ledger_rows(const ThermoLedger& ledger) {
  std::vector<std::vector<double>> rows;
  double w = 0.0, q = 0.0, ep = 0.0;
  for (const auto& s : ledger.steps) {
    w += s.work;
    q += s.heat;
    ep += s.ep_cond;
    rows.push_back({static_cast<double>(s.t_index), s.work, s.heat, s.d_energy, s.d_entropy_cond, s.ep_cond, w, q, ep});
  }
  return rows;
}

inline nlohmann::json ledger_summary(const ThermoLedger& ledger) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(format_double(v)); };
  nlohmann::json j{{"steps", ledger.steps.size()},
                   {"W_total", ledger.work_total},
                   {"Q_total", ledger.heat_total},
                   {"dS_cond_total", ledger.d_entropy_cond_total},
                   {"ep_cond_total", ledger.ep_cond_total},
                   {"first_law_residual", ledger.first_law_residual},
                   {"m_info_clausius", num(ledger.m_info_clausius)}};
  if (ledger.s_theta_init) j["s_theta_init"] = *ledger.s_theta_init;
  return j;
}

}  // namespace thermolearn

#endif  // THERMOLEARN_THERMO_HPP
