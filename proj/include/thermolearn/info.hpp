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

#ifndef THERMOLEARN_INFO_HPP
#define THERMOLEARN_INFO_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "thermolearn/errors.hpp"
#include "thermolearn/model.hpp"
#include "thermolearn/numeric.hpp"
#include "thermolearn/rng.hpp"
#include "thermolearn/thermo.hpp"

namespace thermolearn {

/// K trials of the same task observed on a common snapshot grid. The ensemble
/// marginal at each snapshot is the uniform mixture of the trial models.
class EnsembleRun {
 public:
  /// snapshots[k][s] is trial k's model at time snapshot_times[s].
  EnsembleRun(std::vector<std::size_t> snapshot_times, std::vector<std::vector<Ppm>> snapshots,
              std::vector<Seed> seeds = {})
      : times_(std::move(snapshot_times)), snapshots_(std::move(snapshots)), seeds_(std::move(seeds)) {
    if (snapshots_.empty()) throw InvalidArgument("ensemble needs at least one trial");
    for (const auto& trial : snapshots_) {
      if (trial.size() != times_.size()) throw ShapeError("every trial must share the snapshot grid");
      for (const auto& m : trial) require_same_space(m.space(), snapshots_[0][0].space(), "EnsembleRun");
    }
    const std::size_t k = snapshots_.size();
    dists_.resize(k);
    for (std::size_t i = 0; i < k; ++i)
      for (const auto& m : snapshots_[i]) dists_[i].push_back(exact_dist(m));
    const auto& space = snapshots_[0][0].space();
    for (std::size_t s = 0; s < times_.size(); ++s) {
      std::vector<double> mix(space.size());
      std::vector<double> column(k);
      for (std::size_t x = 0; x < mix.size(); ++x) {
        for (std::size_t i = 0; i < k; ++i) column[i] = std::exp(dists_[i][s].log_probs[x]);
        mix[x] = pairwise_sum(column) / static_cast<double>(k);
      }
      marginals_.push_back(ExactDist::from_probs(space, mix));
    }
  }

  std::size_t trials() const noexcept { return snapshots_.size(); }
  const std::vector<std::size_t>& snapshot_times() const noexcept { return times_; }
  const std::vector<Seed>& seeds() const noexcept { return seeds_; }

  /// Position of time t on the snapshot grid.
  std::size_t slot(std::size_t t) const {
    auto it = std::find(times_.begin(), times_.end(), t);
    if (it == times_.end()) throw IndexError("t = " + std::to_string(t) + " is not on the snapshot grid");
    return static_cast<std::size_t>(it - times_.begin());
  }

  const ExactDist& marginal_at(std::size_t t) const { return marginals_[slot(t)]; }
  const Ppm& model(std::size_t trial, std::size_t t) const { return snapshots_.at(trial)[slot(t)]; }
  const ExactDist& dist(std::size_t trial, std::size_t t) const { return dists_.at(trial)[slot(t)]; }

 private:
  std::vector<std::size_t> times_;
  std::vector<std::vector<Ppm>> snapshots_;
  std::vector<Seed> seeds_;
  std::vector<std::vector<ExactDist>> dists_;
  std::vector<ExactDist> marginals_;
};

/// KL(p(.|theta) || marginal): the per-trial proxy for learned information.
inline double conditional_l_info(const ExactDist& model_dist, const ExactDist& marginal) {
  return kl(model_dist, marginal);
}

inline double conditional_l_info(const Ppm& model, const ExactDist& marginal) {
  return conditional_l_info(exact_dist(model), marginal);
}

/// I(X; Theta_t) = S[marginal] - mean_k S[p(.|theta_k)].
inline double mutual_info_ensemble(const EnsembleRun& run, std::size_t t) {
  const std::size_t s = run.slot(t);
  std::vector<double> conditional(run.trials());
  for (std::size_t k = 0; k < run.trials(); ++k) conditional[k] = entropy(run.dist(k, run.snapshot_times()[s]));
  return entropy(run.marginal_at(t)) - mean(conditional);
}

struct InfoReport {
  std::size_t t0 = 0;
  std::size_t t = 0;
  std::vector<double> l_info_conditional;  // per trial, at t
  double l_info_ensemble = 0.0;            // I(X; Theta_t)
  std::vector<double> ignorance_ep_trials;
  std::vector<double> delta_i_trials;
  double ignorance_ep = 0.0;  // trial mean
  double delta_i = 0.0;       // trial mean
};

/// Identity tolerance between ignorance EP and the change of conditional L-info.
inline constexpr double kIgnoranceIdentityTol = 1e-9;

/// Marginal EP minus conditional EP over (t0, t1], per trial, next to the
/// change of conditional L-info. The two agree exactly; a mismatch beyond
/// 1e-9 raises ConsistencyError.
///
/// ledgers[k] must cover every step of trial k between t0 and t1 (t_index
/// counts steps from 1).
inline InfoReport ignorance_ep(const EnsembleRun& run, std::size_t t0, std::size_t t1,
                               std::span<const ThermoLedger> ledgers) {
  if (ledgers.size() != run.trials()) throw ShapeError("one ledger per trial required");
  if (t1 < t0) throw IndexError("t1 precedes t0");
  const auto& m0 = run.marginal_at(t0);
  const auto& m1 = run.marginal_at(t1);
  InfoReport r;
  r.t0 = t0;
  r.t = t1;
  r.l_info_ensemble = mutual_info_ensemble(run, t1);
  for (std::size_t k = 0; k < run.trials(); ++k) {
    const auto& p0 = run.dist(k, t0);
    const auto& p1 = run.dist(k, t1);
    std::vector<double> heat, ep;
    std::size_t covered = 0;
    for (const auto& s : ledgers[k].steps) {
      if (s.t_index > static_cast<long>(t0) && s.t_index <= static_cast<long>(t1)) {
        heat.push_back(s.heat);
        ep.push_back(s.ep_cond);
        ++covered;
      }
    }
    if (covered != t1 - t0) throw IndexError("ledger of trial " + std::to_string(k) + " does not cover the interval");
    const double q = pairwise_sum(heat);
    const double sigma_cond = pairwise_sum(ep);
    const double sigma_marg = (cross_entropy(p1, m1) - cross_entropy(p0, m0)) - q;
    const double i1 = conditional_l_info(p1, m1);
    const double i0 = conditional_l_info(p0, m0);
    r.l_info_conditional.push_back(i1);
    r.ignorance_ep_trials.push_back(sigma_marg - sigma_cond);
    r.delta_i_trials.push_back(i1 - i0);
    const double gap = std::abs(r.ignorance_ep_trials.back() - r.delta_i_trials.back());
    if (!(gap <= kIgnoranceIdentityTol))
      throw ConsistencyError("ignorance EP differs from delta I by " + format_double(gap) + " in trial " +
                             std::to_string(k));
  }
  r.ignorance_ep = mean(r.ignorance_ep_trials);
  r.delta_i = mean(r.delta_i_trials);
  return r;
}

// ---------------------------------------------------------------------------
// Data processing inequality on explicit finite chains B -> Theta -> X.

/// Joint p(b, theta, x), stored b-major.
struct Joint3 {
  std::size_t nb = 0, nt = 0, nx = 0;
  std::vector<double> p;

  double operator()(std::size_t b, std::size_t t, std::size_t x) const { return p[(b * nt + t) * nx + x]; }
};

/// p(b) p(theta|b) p(x|theta); rows of the channels are conditionals.
inline Joint3 markov_joint(std::span<const double> p_b, const std::vector<std::vector<double>>& theta_given_b,
                           const std::vector<std::vector<double>>& x_given_theta) {
  if (theta_given_b.size() != p_b.size() || theta_given_b.empty() || x_given_theta.empty())
    throw ValidationError("channel shapes do not match");
  Joint3 j{p_b.size(), theta_given_b[0].size(), x_given_theta[0].size(), {}};
  if (x_given_theta.size() != j.nt) throw ValidationError("channel shapes do not match");
  j.p.resize(j.nb * j.nt * j.nx);
  for (std::size_t b = 0; b < j.nb; ++b)
    for (std::size_t t = 0; t < j.nt; ++t)
      for (std::size_t x = 0; x < j.nx; ++x) j.p[(b * j.nt + t) * j.nx + x] = p_b[b] * theta_given_b[b][t] * x_given_theta[t][x];
  return j;
}

struct DpiResult {
  double i_b_theta = 0.0;
  double i_b_x = 0.0;
  bool holds = false;
};

namespace detail {

// Plug-in mutual information of a 2-d table.
inline double mutual_information(const std::vector<std::vector<double>>& joint) {
  const std::size_t na = joint.size(), nb = joint[0].size();
  std::vector<double> pa(na, 0.0), pb(nb, 0.0);
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t b = 0; b < nb; ++b) {
      pa[a] += joint[a][b];
      pb[b] += joint[a][b];
    }
  std::vector<double> terms;
  for (std::size_t a = 0; a < na; ++a)
    for (std::size_t b = 0; b < nb; ++b) {
      const double p = joint[a][b];
      if (p > 0.0) terms.push_back(p * std::log(p / (pa[a] * pb[b])));
    }
  return pairwise_sum(terms);
}

}  // namespace detail

inline DpiResult dpi_check(const Joint3& j) {
  if (j.nb == 0 || j.nt == 0 || j.nx == 0 || j.nb > 64 || j.nt > 64 || j.nx > 64)
    throw ValidationError("alphabet sizes must be in [1, 64]");
  if (j.p.size() != j.nb * j.nt * j.nx) throw ValidationError("joint table has the wrong number of entries");
  for (double v : j.p)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("joint has a negative or non-finite entry");
  const double total = pairwise_sum(j.p);
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("joint sums to " + format_double(total));
  std::vector<std::vector<double>> bt(j.nb, std::vector<double>(j.nt, 0.0));
  std::vector<std::vector<double>> bx(j.nb, std::vector<double>(j.nx, 0.0));
  for (std::size_t b = 0; b < j.nb; ++b)
    for (std::size_t t = 0; t < j.nt; ++t)
      for (std::size_t x = 0; x < j.nx; ++x) {
        bt[b][t] += j(b, t, x);
        bx[b][x] += j(b, t, x);
      }
  DpiResult r;
  r.i_b_theta = detail::mutual_information(bt);
  r.i_b_x = detail::mutual_information(bx);
  r.holds = r.i_b_theta >= r.i_b_x - 1e-12;
  return r;
}

/// Random chain with Dirichlet(1) marginal and channel rows.
inline Joint3 random_chain(Rng& rng, std::size_t nb, std::size_t nt, std::size_t nx) {
  auto simplex = [&](std::size_t n) {
    std::vector<double> v(n);
    double s = 0.0;
    for (auto& e : v) s += (e = rng.exponential());
    for (auto& e : v) e /= s;
    return v;
  };
  const auto pb = simplex(nb);
  std::vector<std::vector<double>> tb(nb), xt(nt);
  for (auto& row : tb) row = simplex(nt);
  for (auto& row : xt) row = simplex(nx);
  return markov_joint(pb, tb, xt);
}

// ---------------------------------------------------------------------------
// Differential entropy of a parameter ensemble.

enum class EntropyMethod { histogram, knn };

struct EntropyEstimate {
  double value = 0.0;   // nats; -inf when the sample set is degenerate
  bool unreliable = false;
  std::string warning;
};

namespace detail {

inline double duplicate_fraction(const std::vector<std::vector<double>>& samples) {
  std::map<std::vector<double>, std::size_t> counts;
  for (const auto& s : samples) ++counts[s];
  std::size_t dup = 0;
  for (const auto& [v, c] : counts)
    if (c > 1) dup += c;
  return static_cast<double>(dup) / static_cast<double>(samples.size());
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Distance to the k-th nearest neighbour of every sample.
inline std::vector<double> knn_distances(const std::vector<std::vector<double>>& s, std::size_t k) {
  const std::size_t n = s.size(), d = s[0].size();
  std::vector<double> eps(n);
  if (d == 1) {
    std::vector<double> sorted(n);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s[a][0] < s[b][0]; });
    for (std::size_t i = 0; i < n; ++i) sorted[i] = s[order[i]][0];
    for (std::size_t r = 0; r < n; ++r) {
      // merge outward from rank r; the k-th step lands on the k-th neighbour
      std::size_t lo = r, hi = r;
      double dist = 0.0;
      for (std::size_t step = 0; step < k; ++step) {
        const double left = lo > 0 ? sorted[r] - sorted[lo - 1] : std::numeric_limits<double>::infinity();
        const double right = hi + 1 < n ? sorted[hi + 1] - sorted[r] : std::numeric_limits<double>::infinity();
        if (left <= right) { dist = left; --lo; }
        else { dist = right; ++hi; }
      }
      eps[order[r]] = dist;
    }
    return eps;
  }
  std::vector<double> buf(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double acc = 0.0;
      for (std::size_t a = 0; a < d; ++a) acc += (s[i][a] - s[j][a]) * (s[i][a] - s[j][a]);
      buf[m++] = acc;
    }
    std::nth_element(buf.begin(), buf.begin() + static_cast<long>(k - 1), buf.end());
    eps[i] = std::sqrt(buf[k - 1]);
  }
  return eps;
}

}  // namespace detail

/// Estimates S(Theta) from ensemble samples.
///   knn: Kozachenko-Leonenko, psi(N) - psi(k) + ln V_d + (d/N) sum ln eps_i.
///   histogram: Freedman-Diaconis widths per axis, plug-in with bin volume.
/// Needs >= 50 samples; dimension <= 4 (histogram) or <= 16 (knn).
inline EntropyEstimate theta_entropy_estimate(const std::vector<std::vector<double>>& samples,
                                              EntropyMethod method, std::size_t k = 3) {
  if (samples.size() < 50) throw InvalidArgument("entropy estimation needs at least 50 samples");
  const std::size_t d = samples[0].size();
  for (const auto& s : samples)
    if (s.size() != d) throw ShapeError("samples differ in dimension");
  if (d == 0 || d > (method == EntropyMethod::histogram ? 4u : 16u))
    throw InvalidArgument("dimension " + std::to_string(d) + " unsupported by this estimator");
  if (method == EntropyMethod::knn && (k < 1 || k >= samples.size())) throw InvalidArgument("bad k");

  EntropyEstimate out;
  const double dup = detail::duplicate_fraction(samples);
  if (dup >= 0.1) {
    out.unreliable = true;
    out.warning = "estimator unreliable: " + format_double(dup * 100.0) + "% exact duplicates";
  }
  const double n = static_cast<double>(samples.size());
  const double neg_inf = -std::numeric_limits<double>::infinity();

  if (method == EntropyMethod::knn) {
    const auto eps = detail::knn_distances(samples, k);
    std::vector<double> logs(eps.size());
    for (std::size_t i = 0; i < eps.size(); ++i) {
      if (eps[i] == 0.0) {
        out.value = neg_inf;
        out.unreliable = true;
        if (out.warning.empty()) out.warning = "estimator unreliable: zero neighbour distance";
        return out;
      }
      logs[i] = std::log(eps[i]);
    }
    const double dd = static_cast<double>(d);
    const double log_unit_ball = 0.5 * dd * std::log(std::numbers::pi) - std::lgamma(0.5 * dd + 1.0);
    out.value = digamma_int(samples.size()) - digamma_int(k) + log_unit_ball + dd * mean(logs);
    return out;
  }

  std::vector<double> lo(d), width(d);
  double log_volume = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    std::vector<double> col(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) col[i] = samples[i][a];
    const double iqr = detail::quantile(col, 0.75) - detail::quantile(col, 0.25);
    const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
    double h = 2.0 * iqr / std::cbrt(n);
    if (h <= 0.0) h = (*mx - *mn) / std::sqrt(n);
    if (h <= 0.0) {
      out.value = neg_inf;
      out.unreliable = true;
      if (out.warning.empty()) out.warning = "estimator unreliable: zero spread";
      return out;
    }
    lo[a] = *mn;
    width[a] = h;
    log_volume += std::log(h);
  }
  std::map<std::vector<long>, std::size_t> bins;
  for (const auto& s : samples) {
    std::vector<long> key(d);
    for (std::size_t a = 0; a < d; ++a) key[a] = static_cast<long>(std::floor((s[a] - lo[a]) / width[a]));
    ++bins[key];
  }
  std::vector<double> terms;
  for (const auto& [key, c] : bins) {
    const double p = static_cast<double>(c) / n;
    terms.push_back(-p * (std::log(p) - log_volume));
  }
  out.value = pairwise_sum(terms);
  return out;
}

}  // namespace thermolearn

#endif  // THERMOLEARN_INFO_HPP
