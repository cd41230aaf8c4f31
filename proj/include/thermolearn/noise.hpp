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

#ifndef THERMOLEARN_NOISE_HPP
#define THERMOLEARN_NOISE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "thermolearn/classifier.hpp"
#include "thermolearn/data.hpp"
#include "thermolearn/errors.hpp"
#include "thermolearn/numeric.hpp"
#include "thermolearn/optimizer.hpp"
#include "thermolearn/parallel.hpp"
#include "thermolearn/rng.hpp"

namespace thermolearn {

/// Raw fluctuation samples eta indexed by (trial, step, component). Only the
/// components listed in `components` are kept; `layer` labels each of them.
struct EtaSamples {
  std::size_t trials = 0;
  std::size_t steps = 0;
  std::vector<std::size_t> components;
  std::vector<std::size_t> layer;
  std::vector<double> values;  // ((trial * steps) + t) * C + c

  std::size_t width() const noexcept { return components.size(); }
  double at(std::size_t trial, std::size_t t, std::size_t c) const { return values[(trial * steps + t) * width() + c]; }
  double* row(std::size_t trial, std::size_t t) { return values.data() + (trial * steps + t) * width(); }
  const double* row(std::size_t trial, std::size_t t) const { return values.data() + (trial * steps + t) * width(); }

  static EtaSamples shaped(std::size_t trials, std::size_t steps, std::vector<std::size_t> components,
                           std::vector<std::size_t> layer = {}) {
    EtaSamples s;
    s.trials = trials;
    s.steps = steps;
    s.components = std::move(components);
    s.layer = layer.empty() ? std::vector<std::size_t>(s.components.size(), 0) : std::move(layer);
    if (s.layer.size() != s.components.size()) throw ShapeError("one layer label per component");
    s.values.assign(trials * steps * s.components.size(), 0.0);
    return s;
  }
};

/// Sorted random subset of [0, dim) of size min(cap, dim).
inline std::vector<std::size_t> pick_components(std::size_t dim, std::size_t cap, Seed seed) {
  std::vector<std::size_t> idx(dim);
  for (std::size_t i = 0; i < dim; ++i) idx[i] = i;
  if (cap >= dim) return idx;
  Rng rng(seed);
  for (std::size_t i = 0; i < cap; ++i) std::swap(idx[i], idx[i + rng.below(dim - i)]);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return idx;
}

/// eta = grad_full - grad_batch per step and trial.
inline EtaSamples collect_eta(std::span<const TrajectoryLog> logs, std::vector<std::size_t> components = {}) {
  if (logs.empty()) throw InvalidArgument("no trajectories");
  const std::size_t steps = logs.front().steps.size();
  const std::size_t dim = logs.front().theta0.size();
  if (components.empty()) components = pick_components(dim, dim, 0);
  for (auto c : components)
    if (c >= dim) throw IndexError("component outside parameter vector");
  auto s = EtaSamples::shaped(logs.size(), steps, std::move(components));
  for (std::size_t k = 0; k < logs.size(); ++k) {
    if (logs[k].steps.size() != steps) throw ShapeError("trials differ in length");
    for (std::size_t t = 0; t < steps; ++t) {
      const auto& rec = logs[k].steps[t];
      if (rec.grad_batch.size() != dim || rec.grad_full.size() != dim)
        throw IncompleteLogError("step record lacks grad_batch or grad_full");
      double* out = s.row(k, t);
      for (std::size_t c = 0; c < s.width(); ++c)
        out[c] = rec.grad_full[s.components[c]] - rec.grad_batch[s.components[c]];
    }
  }
  return s;
}

/// I.i.d. N(0, variance) samples; a fixture for validating the estimators.
inline EtaSamples white_noise_fixture(std::size_t trials, std::size_t steps, std::size_t width, double variance,
                                      Seed seed) {
  auto s = EtaSamples::shaped(trials, steps, pick_components(width, width, 0));
  Rng rng(seed);
  const double sd = std::sqrt(variance);
  for (auto& v : s.values) v = sd * rng.normal();
  return s;
}

namespace detail {

inline double tcf_masked(const EtaSamples& s, std::size_t t, long lag, const std::vector<char>* mask) {
  const long u = static_cast<long>(t) + lag;
  if (t >= s.steps || u < 0 || u >= static_cast<long>(s.steps)) throw IndexError("tcf: t or t+lag outside run");
  std::vector<double> terms;
  terms.reserve(s.trials * s.width());
  for (std::size_t k = 0; k < s.trials; ++k) {
    const double* a = s.row(k, t);
    const double* b = s.row(k, static_cast<std::size_t>(u));
    for (std::size_t c = 0; c < s.width(); ++c)
      if (mask == nullptr || (*mask)[c] != 0) terms.push_back(a[c] * b[c]);
  }
  if (terms.empty()) return 0.0;
  return pairwise_sum(terms) / static_cast<double>(terms.size());
}

}  // namespace detail

/// Standard error of tcf(t, lag) treating the (trial, component) products as
/// independent. Exact for i.i.d. fixtures, optimistic for correlated noise.
inline double tcf_stderr(const EtaSamples& s, std::size_t t, long lag);

/// Diagonal-averaged time-correlation <eta_i(t) eta_i(t+lag)>, ensemble over
/// trials and averaged over the kept components. t is a 0-based sample index.
inline double tcf(const EtaSamples& s, std::size_t t, long lag) {
  if (s.trials == 0 || s.width() == 0) throw InvalidArgument("tcf: empty samples");
  return detail::tcf_masked(s, t, lag, nullptr);
}

inline double tcf_stderr(const EtaSamples& s, std::size_t t, long lag) {
  const long u = static_cast<long>(t) + lag;
  if (t >= s.steps || u < 0 || u >= static_cast<long>(s.steps)) throw IndexError("tcf: t or t+lag outside run");
  std::vector<double> prods;
  for (std::size_t k = 0; k < s.trials; ++k)
    for (std::size_t c = 0; c < s.width(); ++c) prods.push_back(s.at(k, t, c) * s.at(k, static_cast<std::size_t>(u), c));
  if (prods.size() < 2) return std::numeric_limits<double>::infinity();
  return sample_std(prods) / std::sqrt(static_cast<double>(prods.size()));
}

inline std::vector<double> variance_curve(const EtaSamples& s) {
  std::vector<double> v(s.steps);
  for (std::size_t t = 0; t < s.steps; ++t) v[t] = tcf(s, t, 0);
  return v;
}

/// Trailing window [begin, end) over which a variance curve is checked for
/// flatness. The window is cut into `blocks` equal blocks and the block means
/// must satisfy max/min <= 1.2.
struct StationaryWindow {
  std::size_t begin = 0;
  std::size_t end = 0;
  double mean = 0.0;
};

inline constexpr double kFlatnessRatio = 1.2;

inline std::optional<StationaryWindow> find_stationary_window(std::span<const double> curve, std::size_t window = 0,
                                                             std::size_t blocks = 4) {
  if (curve.empty()) return std::nullopt;
  if (window == 0) window = std::max<std::size_t>(curve.size() / 2, 1);
  window = std::min(window, curve.size());
  blocks = std::clamp<std::size_t>(blocks, 1, window);
  const std::size_t begin = curve.size() - window;
  const std::size_t len = window / blocks;
  std::vector<double> means;
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t lo = curve.size() - (blocks - b) * len;
    means.push_back(mean(curve.subspan(lo, len)));
  }
  const double hi = *std::max_element(means.begin(), means.end());
  const double lo = *std::min_element(means.begin(), means.end());
  if (lo < 0.0) return std::nullopt;
  if (hi > 0.0 && !(hi <= kFlatnessRatio * lo)) return std::nullopt;
  return StationaryWindow{begin, curve.size(), mean(curve.subspan(begin))};
}

/// kB = mu * (window-averaged variance) / 2.
inline double fdt_kB(std::span<const double> variance, double mobility, std::size_t window = 0) {
  if (!(mobility >= 0.0)) throw InvalidParameter("mobility must be >= 0");
  const auto w = find_stationary_window(variance, window);
  if (!w) throw NotStationaryError("variance curve is not flat over the trailing window",
                                   std::vector<double>(variance.begin(), variance.end()));
  return mobility * w->mean / 2.0;
}

inline double fdt_kB(const EtaSamples& s, double mobility, std::size_t window = 0) {
  return fdt_kB(variance_curve(s), mobility, window);
}

// ---------------------------------------------------------------------------

struct NoiseStats {
  std::vector<std::size_t> times;  // step indices, 1-based
  std::vector<double> variance_avg;
  std::size_t ref_t = 0;  // step index
  std::map<long, double> autocorr;
  /// tcf(t, lag) / tcf(t, 0), each averaged over reference steps t in the
  /// second half of the run; lag 0 is 1 by construction.
  std::map<long, double> autocorr_window;
  double kB_estimate = std::numeric_limits<double>::quiet_NaN();
  bool stationary = false;
  std::vector<double> per_layer_kB;
  double max_drift_magnitude = 0.0;
  /// Per-trial average of eta^2 over the second half of the run.
  std::vector<double> trial_variance;
};

/// Summarizes samples whose sample index s corresponds to step s + 1.
inline NoiseStats noise_stats(const EtaSamples& s, double mobility, std::optional<std::size_t> ref_index = std::nullopt,
                              std::size_t max_lag = 20) {
  if (s.steps == 0) throw InvalidArgument("noise_stats: no steps");
  NoiseStats out;
  out.variance_avg = variance_curve(s);
  for (std::size_t t = 0; t < s.steps; ++t) out.times.push_back(t + 1);
  const std::size_t ref = ref_index.value_or(s.steps / 2);
  if (ref >= s.steps) throw IndexError("reference index outside run");
  out.ref_t = ref + 1;
  for (std::size_t lag = 0; lag <= max_lag && ref + lag < s.steps; ++lag)
    out.autocorr[static_cast<long>(lag)] = lag == 0 ? out.variance_avg[ref] : tcf(s, ref, static_cast<long>(lag));

  const std::size_t half0 = s.steps / 2;
  for (std::size_t lag = 0; lag <= max_lag && half0 + lag < s.steps; ++lag) {
    std::vector<double> num, den;
    for (std::size_t t = half0; t + lag < s.steps; ++t) {
      num.push_back(tcf(s, t, static_cast<long>(lag)));
      den.push_back(out.variance_avg[t]);
    }
    const double d = mean(den);
    out.autocorr_window[static_cast<long>(lag)] = d > 0.0 ? mean(num) / d : 0.0;
  }

  const auto window = find_stationary_window(out.variance_avg);
  out.stationary = window.has_value();
  if (window) {
    out.kB_estimate = mobility * window->mean / 2.0;
    const std::size_t layers = s.layer.empty() ? 0 : *std::max_element(s.layer.begin(), s.layer.end()) + 1;
    for (std::size_t l = 0; l < layers; ++l) {
      std::vector<char> mask(s.width());
      for (std::size_t c = 0; c < s.width(); ++c) mask[c] = s.layer[c] == l ? 1 : 0;
      std::vector<double> curve;
      for (std::size_t t = window->begin; t < window->end; ++t) curve.push_back(detail::tcf_masked(s, t, 0, &mask));
      out.per_layer_kB.push_back(mobility * mean(curve) / 2.0);
    }
  }
  const std::size_t half = s.steps / 2;
  for (std::size_t k = 0; k < s.trials; ++k) {
    std::vector<double> sq;
    for (std::size_t t = half; t < s.steps; ++t) {
      const double* r = s.row(k, t);
      for (std::size_t c = 0; c < s.width(); ++c) sq.push_back(r[c] * r[c]);
    }
    out.trial_variance.push_back(sq.empty() ? 0.0 : pairwise_sum(sq) / static_cast<double>(sq.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Long-run equilibrium check for one- and two-parameter tasks.

/// A task the long run can drive: U_B, its gradient, and a stochastic
/// mini-batch gradient drawn with the supplied generator.
template <class T>
concept LangevinTask = requires(const T& task, const std::vector<double>& theta, Rng& rng) {
  { task.theta0() } -> std::convertible_to<std::vector<double>>;
  { task.potential(theta) } -> std::convertible_to<double>;
  { task.full_gradient(theta) } -> std::same_as<std::vector<double>>;
  { task.batch_gradient(theta, rng) } -> std::same_as<std::vector<double>>;
};

/// U_B = k |theta|^2 / 2 with mini-batch gradient grad U_B - eta,
/// eta ~ N(0, noise_variance) i.i.d.
struct QuadraticTask {
  double stiffness = 1.0;
  double noise_variance = 2.0;
  std::vector<double> start{0.0};

  std::vector<double> theta0() const { return start; }
  double potential(const std::vector<double>& th) const {
    double u = 0.0;
    for (double v : th) u += 0.5 * stiffness * v * v;
    return u;
  }
  std::vector<double> full_gradient(const std::vector<double>& th) const {
    std::vector<double> g(th.size());
    for (std::size_t i = 0; i < th.size(); ++i) g[i] = stiffness * th[i];
    return g;
  }
  std::vector<double> batch_gradient(const std::vector<double>& th, Rng& rng) const {
    auto g = full_gradient(th);
    if (noise_variance > 0.0) {
      const double sd = std::sqrt(noise_variance);
      for (auto& v : g) v -= sd * rng.normal();
    }
    return g;
  }
};

/// Normalized NLL of a small Ppm on a dataset, batches drawn with replacement.
class PpmNllTask {
 public:
  PpmNllTask(const Ppm& model, std::shared_ptr<const Dataset> data, std::size_t batch_size)
      : obj_(model, std::move(data)), batch_size_(batch_size) {
    if (batch_size_ == 0) throw InvalidParameter("batch size must be >= 1");
  }
  std::vector<double> theta0() const { return obj_.theta(); }
  double potential(const std::vector<double>& th) const { return at(th).full_loss(); }
  std::vector<double> full_gradient(const std::vector<double>& th) const { return at(th).full_gradient(); }
  std::vector<double> batch_gradient(const std::vector<double>& th, Rng& rng) const {
    std::vector<std::size_t> ids(batch_size_);
    for (auto& i : ids) i = rng.below(obj_.data().size());
    return at(th).batch_gradient(ids);
  }

 private:
  PpmObjective at(const std::vector<double>& th) const { return obj_.with_theta(th); }
  PpmObjective obj_;
  std::size_t batch_size_;
};

struct LongRunConfig {
  SgdConfig sgd{0.01, 1.0, 1000000};
  Seed seed = 1;
  std::size_t bins = 50;
  std::optional<double> kB_override;
};

struct EquilibriumCheck {
  std::vector<std::vector<double>> bin_edges;  // per dimension
  std::vector<double> theta_hist;              // row-major over dimensions
  std::vector<double> predicted;
  double tv_gap = 0.0;
  double kB = 0.0;
  std::vector<double> theta_mean;
  std::vector<double> theta_var;
  std::size_t kept = 0;
};

inline constexpr double kCollapsedVariance = 1e-24;
inline constexpr double kMeanShift = 0.5;

/// Runs cfg.sgd.steps noisy updates, drops the first half, and compares the
/// binned stationary histogram with exp(-U_B/kB) normalized on the same bins.
template <LangevinTask Task>
EquilibriumCheck equilibrium_check(const Task& task, const LongRunConfig& cfg) {
  cfg.sgd.validate();
  auto theta = task.theta0();
  const std::size_t dim = theta.size();
  if (dim == 0 || dim > 2) throw InvalidArgument("equilibrium_check needs 1 or 2 parameters");
  const std::size_t n = cfg.sgd.steps;
  if (n < 8) throw InvalidParameter("long run needs at least 8 steps");
  if (cfg.bins < 2) throw InvalidParameter("need at least 2 bins");
  const double r = cfg.sgd.learning_rate;
  const std::size_t burn = n / 2;
  Rng rng(cfg.seed);

  std::vector<double> kept;  // theta after each post-burn-in step, row-major
  kept.reserve((n - burn) * dim);
  auto eta = EtaSamples::shaped(1, n - burn, pick_components(dim, dim, 0));
  for (std::size_t t = 0; t < n; ++t) {
    const auto gb = task.batch_gradient(theta, rng);
    if (t >= burn) {
      const auto gf = task.full_gradient(theta);
      double* row = eta.row(0, t - burn);
      for (std::size_t i = 0; i < dim; ++i) row[i] = gf[i] - gb[i];
    }
    for (std::size_t i = 0; i < dim; ++i) {
      theta[i] -= r * gb[i];
      if (!(std::abs(theta[i]) <= kDivergenceBound)) throw DivergenceError("long run diverged", static_cast<long>(t + 1));
    }
    if (t >= burn) kept.insert(kept.end(), theta.begin(), theta.end());
  }
  const std::size_t m = n - burn;

  EquilibriumCheck out;
  out.kept = m;
  // trend test on the two halves of the kept segment: variances within the
  // flatness ratio, means within half a standard deviation
  for (std::size_t i = 0; i < dim; ++i) {
    std::vector<double> a, b, all;
    for (std::size_t t = 0; t < m; ++t) {
      const double v = kept[t * dim + i];
      (t < m / 2 ? a : b).push_back(v);
      all.push_back(v);
    }
    const double va = sample_variance(a), vb = sample_variance(b);
    const bool collapsed = va <= kCollapsedVariance && vb <= kCollapsedVariance;
    if (!collapsed && !(std::max(va, vb) <= kFlatnessRatio * std::min(va, vb)))
      throw BurnInError("parameter variance still drifting after burn-in");
    if (!collapsed && !(std::abs(mean(a) - mean(b)) <= kMeanShift * std::sqrt(std::max(va, vb))))
      throw BurnInError("parameter mean still drifting after burn-in");
    out.theta_mean.push_back(mean(all));
    out.theta_var.push_back(sample_variance(all));
  }
  out.kB = cfg.kB_override ? *cfg.kB_override : fdt_kB(eta, cfg.sgd.mobility());

  // bins
  std::vector<double> lo(dim), width(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    double mn = kept[i], mx = kept[i];
    for (std::size_t t = 0; t < m; ++t) {
      mn = std::min(mn, kept[t * dim + i]);
      mx = std::max(mx, kept[t * dim + i]);
    }
    double half = 0.75 * (mx - mn);
    if (!(half > 1e-9)) half = out.kB > 0.0 ? 5.0 * std::sqrt(out.kB) : 1.0;
    const double center = 0.5 * (mn + mx);
    lo[i] = center - half;
    width[i] = 2.0 * half / static_cast<double>(cfg.bins);
    std::vector<double> edges(cfg.bins + 1);
    for (std::size_t b = 0; b <= cfg.bins; ++b) edges[b] = lo[i] + width[i] * static_cast<double>(b);
    out.bin_edges.push_back(std::move(edges));
  }
  const std::size_t cells = dim == 1 ? cfg.bins : cfg.bins * cfg.bins;
  std::vector<double> counts(cells, 0.0);
  for (std::size_t t = 0; t < m; ++t) {
    std::size_t cell = 0;
    for (std::size_t i = 0; i < dim; ++i) {
      const double z = (kept[t * dim + i] - lo[i]) / width[i];
      const auto b = static_cast<std::size_t>(std::clamp(z, 0.0, static_cast<double>(cfg.bins) - 0.5));
      cell = cell * cfg.bins + b;
    }
    counts[cell] += 1.0;
  }
  out.theta_hist.resize(cells);
  const double total = pairwise_sum(counts);
  for (std::size_t c = 0; c < cells; ++c) out.theta_hist[c] = counts[c] / total;

  // F_Theta by quadrature: log-sum-exp of -U/kB at bin centers.
  std::vector<double> logw(cells);
  std::vector<double> point(dim);
  double cell_volume = 1.0;
  for (std::size_t i = 0; i < dim; ++i) cell_volume *= width[i];
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t rem = c;
    for (std::size_t i = dim; i-- > 0;) {
      point[i] = lo[i] + width[i] * (static_cast<double>(rem % cfg.bins) + 0.5);
      rem /= cfg.bins;
    }
    const double u = task.potential(point);
    logw[c] = out.kB > 0.0 ? -u / out.kB + std::log(cell_volume) : -u;
  }
  if (out.kB > 0.0) {
    const double lz = log_sum_exp(logw);
    out.predicted.resize(cells);
    for (std::size_t c = 0; c < cells; ++c) out.predicted[c] = std::exp(logw[c] - lz);
  } else {
    // zero temperature: all mass on the lowest-energy cell
    out.predicted.assign(cells, 0.0);
    out.predicted[static_cast<std::size_t>(std::max_element(logw.begin(), logw.end()) - logw.begin())] = 1.0;
  }
  std::vector<double> diff(cells);
  for (std::size_t c = 0; c < cells; ++c) diff[c] = std::abs(out.theta_hist[c] - out.predicted[c]);
  out.tv_gap = 0.5 * pairwise_sum(diff);
  return out;
}

// ---------------------------------------------------------------------------
// Classifier noise program.

struct Fig3Config {
  std::vector<std::size_t> batch_sizes{1, 10, 100};
  std::size_t trials = 50;
  std::size_t steps = 200;
  std::vector<int> hidden{200, 200, 200};
  double learning_rate = 0.05;
  std::size_t tracked_components = 4096;
  std::size_t max_lag = 20;
  std::size_t trace_trials = 4;
  Seed seed = 7;
  std::size_t threads = 1;
};

struct Fig3Scenario {
  std::size_t batch_size = 0;
  NoiseStats stats;
  std::vector<double> acc_mean;  // t = 0..steps
  std::vector<double> acc_var;
  std::size_t trace_index = 0;
  std::vector<std::vector<double>> traces;  // [trial][t], t = 0..steps
};

struct Fig3Result {
  std::vector<int> layers;
  std::size_t dim = 0;
  std::vector<Fig3Scenario> scenarios;
};

inline Fig3Result fig3_experiment(const Fig3Config& cfg, std::shared_ptr<const Dataset> data) {
  if (!data || !data->labeled()) throw InvalidArgument("noise program needs a labeled dataset");
  if (cfg.trials == 0 || cfg.steps < 2 || cfg.batch_sizes.empty()) throw InvalidParameter("empty noise program");
  SgdConfig sgd{cfg.learning_rate, 1.0, cfg.steps};
  sgd.validate();
  int classes = 0;
  for (int y : data->labels()) classes = std::max(classes, y + 1);

  Fig3Result res;
  res.layers.push_back(static_cast<int>(data->inputs().cols()));
  res.layers.insert(res.layers.end(), cfg.hidden.begin(), cfg.hidden.end());
  res.layers.push_back(classes);
  res.dim = ClassifierObjective::param_count(res.layers);

  const ClassifierObjective probe(res.layers, std::vector<double>(res.dim, 0.0), data);
  const auto tracked = pick_components(res.dim, cfg.tracked_components, derive_seed(cfg.seed, 0xC0));
  std::vector<std::size_t> layer_of(tracked.size());
  for (std::size_t c = 0; c < tracked.size(); ++c) layer_of[c] = probe.layer_of(tracked[c]);
  const std::size_t last_begin = probe.layer_offset(probe.weight_layers() - 1);
  const std::size_t last_weights =
      static_cast<std::size_t>(res.layers[res.layers.size() - 2]) * static_cast<std::size_t>(res.layers.back());

  for (std::size_t b : cfg.batch_sizes) {
    if (b == 0) throw InvalidParameter("batch size must be >= 1");
    Fig3Scenario sc;
    sc.batch_size = b;
    Rng pick(derive_seed(cfg.seed, 0x7000 + b));
    sc.trace_index = last_begin + pick.below(last_weights);
    auto eta = EtaSamples::shaped(cfg.trials, cfg.steps, tracked, layer_of);
    std::vector<std::vector<double>> acc(cfg.trials, std::vector<double>(cfg.steps + 1));
    std::vector<std::vector<double>> trace(cfg.trials, std::vector<double>(cfg.steps + 1));
    std::vector<double> drift(cfg.trials, 0.0);

    parallel_for(cfg.trials, cfg.threads, [&](std::size_t k) {
      ClassifierObjective obj(res.layers, ClassifierObjective::initial_theta(res.layers, derive_seed(cfg.seed, k)),
                              data);
      BatchStream stream(data, b, derive_seed(derive_seed(cfg.seed, 0x5000 + b), k));
      auto theta = obj.theta();
      trace[k][0] = theta[sc.trace_index];
      for (std::size_t t = 0; t < cfg.steps; ++t) {
        const auto ids = stream.next_batch();
        const auto gb = obj.batch_gradient(ids);
        auto [gf, a] = obj.full_gradient_and_accuracy();
        acc[k][t] = a;
        double* row = eta.row(k, t);
        for (std::size_t c = 0; c < tracked.size(); ++c) row[c] = gf[tracked[c]] - gb[tracked[c]];
        for (std::size_t i = 0; i < theta.size(); ++i) {
          if (!std::isfinite(gb[i]) || !std::isfinite(gf[i])) throw DivergenceError("non-finite gradient", static_cast<long>(t + 1));
          drift[k] = std::max(drift[k], std::abs(gf[i]));
          theta[i] -= sgd.learning_rate * gb[i];
        }
        obj = obj.with_theta(theta);
        trace[k][t + 1] = theta[sc.trace_index];
      }
      acc[k][cfg.steps] = obj.accuracy();
    });

    sc.stats = noise_stats(eta, sgd.mobility(), std::nullopt, cfg.max_lag);
    sc.stats.max_drift_magnitude = *std::max_element(drift.begin(), drift.end());
    for (std::size_t t = 0; t <= cfg.steps; ++t) {
      std::vector<double> col(cfg.trials);
      for (std::size_t k = 0; k < cfg.trials; ++k) col[k] = acc[k][t];
      sc.acc_mean.push_back(mean(col));
      sc.acc_var.push_back(cfg.trials > 1 ? sample_variance(col) : 0.0);
    }
    trace.resize(std::min(cfg.trace_trials, cfg.trials));
    sc.traces = std::move(trace);
    res.scenarios.push_back(std::move(sc));
  }
  return res;
}

}  // namespace thermolearn

#endif  // THERMOLEARN_NOISE_HPP
