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

#ifndef THERMOLEARN_MODEL_HPP
#define THERMOLEARN_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "thermolearn/errors.hpp"
#include "thermolearn/numeric.hpp"
#include "thermolearn/rng.hpp"

namespace thermolearn {

/// Canonical integer index of a microstate.
using State = std::uint32_t;

/// Largest state space on which exact (enumerated) computations are allowed.
inline constexpr std::size_t kEnumerationCap = std::size_t{1} << 16;

enum class SpaceKind { two_state, spin_grid, categorical };

class StateSpace {
 public:
  static StateSpace two_state() { return StateSpace(SpaceKind::two_state, 1, 2); }

  /// m binary spins; bit i of the index is spin s_i = 2*bit - 1. Sizes past
  /// the enumeration cap are representable (Metropolis still works on them)
  /// but every exact computation rejects them.
  static StateSpace spin_grid(int m) {
    if (m < 2 || m > 30) throw InvalidParameter("spin_grid needs 2 <= m <= 30, got " + std::to_string(m));
    return StateSpace(SpaceKind::spin_grid, m, std::size_t{1} << m);
  }

  static StateSpace categorical(int c) {
    if (c < 2 || c > 4096) throw InvalidParameter("categorical needs 2 <= c <= 4096, got " + std::to_string(c));
    return StateSpace(SpaceKind::categorical, c, static_cast<std::size_t>(c));
  }

  SpaceKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return size_; }
  /// m for spin_grid, c for categorical, 1 for two_state.
  int arity() const noexcept { return arity_; }
  bool enumerable() const noexcept { return size_ <= kEnumerationCap; }

  int bit(State x, int i) const noexcept { return static_cast<int>((x >> i) & 1U); }
  int spin(State x, int i) const noexcept { return 2 * bit(x, i) - 1; }

  /// Input vector fed to an mlp energy: +-1 spins for binary spaces, one-hot
  /// for categorical.
  std::vector<double> encode(State x) const {
    switch (kind_) {
      case SpaceKind::two_state:
        return {static_cast<double>(2 * static_cast<int>(x) - 1)};
      case SpaceKind::spin_grid: {
        std::vector<double> v(static_cast<std::size_t>(arity_));
        for (int i = 0; i < arity_; ++i) v[static_cast<std::size_t>(i)] = spin(x, i);
        return v;
      }
      case SpaceKind::categorical: {
        std::vector<double> v(size_, 0.0);
        v[x] = 1.0;
        return v;
      }
    }
    return {};
  }

  std::size_t encoding_dim() const noexcept {
    return kind_ == SpaceKind::categorical ? size_ : static_cast<std::size_t>(arity_);
  }

  void check(State x) const {
    if (x >= size_) throw IndexError("microstate " + std::to_string(x) + " outside space of size " + std::to_string(size_));
  }

  friend bool operator==(const StateSpace&, const StateSpace&) = default;

 private:
  StateSpace(SpaceKind kind, int arity, std::size_t size) : kind_(kind), arity_(arity), size_(size) {}

  SpaceKind kind_;
  int arity_;
  std::size_t size_;
};

/// One declared feature function f_a(x) of a linear energy.
struct Feature {
  enum class Kind { bit, spin, pair, onehot, constant };
  Kind kind = Kind::constant;
  int i = 0;
  int j = 0;
  double scale = 1.0;

  double operator()(const StateSpace& space, State x) const noexcept {
    switch (kind) {
      case Kind::bit: return scale * space.bit(x, i);
      case Kind::spin: return scale * space.spin(x, i);
      case Kind::pair: return scale * space.spin(x, i) * space.spin(x, j);
      case Kind::onehot: return x == static_cast<State>(i) ? scale : 0.0;
      case Kind::constant: return scale;
    }
    return 0.0;
  }

  /// Text form: [scale*]name, e.g. "bit:0", "-bit:0", "0.5*pair:0:1", "const".
  std::string to_string() const {
    std::string body;
    switch (kind) {
      case Kind::bit: body = "bit:" + std::to_string(i); break;
      case Kind::spin: body = "spin:" + std::to_string(i); break;
      case Kind::pair: body = "pair:" + std::to_string(i) + ":" + std::to_string(j); break;
      case Kind::onehot: body = "onehot:" + std::to_string(i); break;
      case Kind::constant: body = "const"; break;
    }
    if (scale == 1.0) return body;
    if (scale == -1.0) return "-" + body;
    return format_double(scale) + "*" + body;
  }

  static Feature parse(std::string text) {
    Feature f;
    if (auto star = text.find('*'); star != std::string::npos) {
      try {
        f.scale = std::stod(text.substr(0, star));
      } catch (const std::exception&) {
        throw ValidationError("bad feature scale in '" + text + "'");
      }
      text = text.substr(star + 1);
    } else if (!text.empty() && text.front() == '-') {
      f.scale = -1.0;
      text = text.substr(1);
    }
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t k = 0; k <= text.size(); ++k) {
      if (k == text.size() || text[k] == ':') {
        parts.push_back(text.substr(start, k - start));
        start = k + 1;
      }
    }
    auto index = [&](std::size_t k) {
      if (k >= parts.size()) throw ValidationError("feature '" + text + "' is missing an index");
      try {
        return std::stoi(parts[k]);
      } catch (const std::exception&) {
        throw ValidationError("bad feature index in '" + text + "'");
      }
    };
    const std::string& name = parts.front();
    if (name == "bit") { f.kind = Kind::bit; f.i = index(1); }
    else if (name == "spin") { f.kind = Kind::spin; f.i = index(1); }
    else if (name == "pair") { f.kind = Kind::pair; f.i = index(1); f.j = index(2); }
    else if (name == "onehot") { f.kind = Kind::onehot; f.i = index(1); }
    else if (name == "const") { f.kind = Kind::constant; }
    else throw ValidationError("unknown feature '" + name + "'");
    return f;
  }

  friend bool operator==(const Feature&, const Feature&) = default;
};

enum class EnergyForm { linear_features, mlp_energy };

/// Parametric probabilistic model p(x|theta) proportional to exp(-phi_theta(x))
/// on an enumerable space.
///
/// linear_features: phi_theta(x) = -sum_a theta_a f_a(x).
/// mlp_energy: tanh feed-forward network from `space.encode(x)` to a scalar.
/// Layer sizes include input and output (first = encoding dim, last = 1);
/// theta holds, layer by layer, the row-major weight matrix followed by the
/// bias vector. The output layer is linear.
///
/// Energies are unnormalized; `exact_dist` supplies the log-partition.
class Ppm {
 public:
  static Ppm linear(StateSpace space, std::vector<Feature> features, std::vector<double> theta) {
    if (features.size() != theta.size())
      throw ShapeError("theta has " + std::to_string(theta.size()) + " entries for " +
                       std::to_string(features.size()) + " features");
    for (const auto& f : features) validate_feature(space, f);
    Ppm m(space, EnergyForm::linear_features);
    m.features_ = std::move(features);
    m.theta_ = std::move(theta);
    return m;
  }

  static Ppm mlp(StateSpace space, std::vector<int> layers, std::vector<double> theta) {
    if (layers.size() < 2) throw ValidationError("mlp needs at least input and output layer sizes");
    if (layers.front() != static_cast<int>(space.encoding_dim()))
      throw ShapeError("mlp input width " + std::to_string(layers.front()) + " != encoding dim " +
                       std::to_string(space.encoding_dim()));
    if (layers.back() != 1) throw ShapeError("mlp output width must be 1");
    for (int w : layers)
      if (w < 1) throw ValidationError("mlp layer widths must be positive");
    Ppm m(space, EnergyForm::mlp_energy);
    m.layers_ = std::move(layers);
    if (theta.size() != m.mlp_param_count())
      throw ShapeError("theta has " + std::to_string(theta.size()) + " entries, mlp needs " +
                       std::to_string(m.mlp_param_count()));
    m.theta_ = std::move(theta);
    return m;
  }

  /// Two-state model with phi_theta(x) = theta * x.
  static Ppm two_state(double theta) {
    return linear(StateSpace::two_state(), {Feature{Feature::Kind::bit, 0, 0, -1.0}}, {theta});
  }

  /// Spin model on m spins: one field per spin then ring couplings s_i s_{i+1}.
  /// theta must have 2m entries (m = 2 has a single coupling, so 3 entries).
  static Ppm spin_grid(int m, std::vector<double> theta) { return linear(StateSpace::spin_grid(m), spin_grid_features(m), std::move(theta)); }

  static std::vector<Feature> spin_grid_features(int m) {
    std::vector<Feature> fs;
    for (int i = 0; i < m; ++i) fs.push_back({Feature::Kind::spin, i, 0, 1.0});
    const int couplings = m == 2 ? 1 : m;
    for (int i = 0; i < couplings; ++i) fs.push_back({Feature::Kind::pair, i, (i + 1) % m, 1.0});
    return fs;
  }

  const StateSpace& space() const noexcept { return space_; }
  EnergyForm form() const noexcept { return form_; }
  const std::vector<double>& theta() const noexcept { return theta_; }
  std::size_t dim() const noexcept { return theta_.size(); }
  const std::vector<Feature>& features() const noexcept { return features_; }
  const std::vector<int>& layers() const noexcept { return layers_; }

  /// Same energy form and space with new parameters.
  Ppm with_theta(std::vector<double> theta) const {
    if (theta.size() != theta_.size()) throw ShapeError("with_theta: dimension mismatch");
    Ppm m = *this;
    m.theta_ = std::move(theta);
    return m;
  }

  void check_finite() const {
    for (double v : theta_)
      if (!std::isfinite(v)) throw InvalidParameter("theta contains a non-finite value");
  }

  /// phi_theta(x).
  double energy(State x) const {
    space_.check(x);
    if (form_ == EnergyForm::linear_features) {
      double e = 0.0;
      for (std::size_t a = 0; a < features_.size(); ++a) e -= theta_[a] * features_[a](space_, x);
      return e;
    }
    return mlp_forward(x, nullptr);
  }

  /// Gradient of phi_theta(x) with respect to theta.
  std::vector<double> energy_gradient(State x) const {
    space_.check(x);
    std::vector<double> g(theta_.size(), 0.0);
    if (form_ == EnergyForm::linear_features) {
      for (std::size_t a = 0; a < features_.size(); ++a) g[a] = -features_[a](space_, x);
      return g;
    }
    mlp_forward(x, &g);
    return g;
  }

 private:
  Ppm(StateSpace space, EnergyForm form) : space_(space), form_(form) {}

  static void validate_feature(const StateSpace& space, const Feature& f) {
    const bool binary = space.kind() != SpaceKind::categorical;
    auto in_range = [&](int i) { return i >= 0 && i < space.arity(); };
    switch (f.kind) {
      case Feature::Kind::bit:
      case Feature::Kind::spin:
        if (!binary || !in_range(f.i)) throw ValidationError("feature " + f.to_string() + " invalid for this space");
        break;
      case Feature::Kind::pair:
        if (!binary || !in_range(f.i) || !in_range(f.j) || f.i == f.j)
          throw ValidationError("feature " + f.to_string() + " invalid for this space");
        break;
      case Feature::Kind::onehot:
        if (f.i < 0 || static_cast<std::size_t>(f.i) >= space.size())
          throw ValidationError("feature " + f.to_string() + " invalid for this space");
        break;
      case Feature::Kind::constant: break;
    }
  }

  std::size_t mlp_param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layers_.size(); ++l)
      n += static_cast<std::size_t>(layers_[l + 1]) * static_cast<std::size_t>(layers_[l] + 1);
    return n;
  }

  // Forward pass; when `grad` is given, backpropagates d(phi)/d(theta) into it.
  double mlp_forward(State x, std::vector<double>* grad) const {
    const std::size_t depth = layers_.size() - 1;
    std::vector<std::vector<double>> acts(depth + 1);
    std::vector<std::size_t> offsets(depth);
    acts[0] = space_.encode(x);
    std::size_t off = 0;
    for (std::size_t l = 0; l < depth; ++l) {
      offsets[l] = off;
      const auto in = static_cast<std::size_t>(layers_[l]);
      const auto out = static_cast<std::size_t>(layers_[l + 1]);
      const double* w = theta_.data() + off;
      const double* b = w + in * out;
      std::vector<double> z(out);
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        for (std::size_t k = 0; k < in; ++k) s += w[o * in + k] * acts[l][k];
        z[o] = (l + 1 < depth) ? std::tanh(s) : s;
      }
      acts[l + 1] = std::move(z);
      off += out * (in + 1);
    }
    if (grad != nullptr) {
      std::vector<double> delta{1.0};  // d phi / d output pre-activation
      for (std::size_t l = depth; l-- > 0;) {
        const auto in = static_cast<std::size_t>(layers_[l]);
        const auto out = static_cast<std::size_t>(layers_[l + 1]);
        const double* w = theta_.data() + offsets[l];
        double* gw = grad->data() + offsets[l];
        double* gb = gw + in * out;
        for (std::size_t o = 0; o < out; ++o) {
          gb[o] = delta[o];
          for (std::size_t k = 0; k < in; ++k) gw[o * in + k] = delta[o] * acts[l][k];
        }
        if (l == 0) break;
        std::vector<double> prev(in, 0.0);
        for (std::size_t k = 0; k < in; ++k) {
          double s = 0.0;
          for (std::size_t o = 0; o < out; ++o) s += w[o * in + k] * delta[o];
          const double a = acts[l][k];
          prev[k] = s * (1.0 - a * a);
        }
        delta = std::move(prev);
      }
    }
    return acts[depth][0];
  }

  StateSpace space_;
  EnergyForm form_;
  std::vector<Feature> features_;
  std::vector<int> layers_;
  std::vector<double> theta_;
};

/// Materialized, normalized p(x|theta): log_probs[x] = -phi(x) - log_partition.
struct ExactDist {
  StateSpace space = StateSpace::two_state();
  std::vector<double> log_probs;
  double log_partition = 0.0;

  double prob(State x) const { return std::exp(log_probs[x]); }

  std::vector<double> probs() const {
    std::vector<double> p(log_probs.size());
    std::transform(log_probs.begin(), log_probs.end(), p.begin(), [](double l) { return std::exp(l); });
    return p;
  }

  /// Builds a distribution from explicit probabilities (normalized here).
  static ExactDist from_probs(StateSpace space, std::span<const double> p) {
    if (p.size() != space.size()) throw ShapeError("probability vector length does not match space");
    const double total = pairwise_sum(p);
    ExactDist d{space, std::vector<double>(p.size()), 0.0};
    for (std::size_t x = 0; x < p.size(); ++x) {
      if (p[x] < 0.0) throw ValidationError("negative probability");
      d.log_probs[x] = std::log(p[x] / total);
    }
    return d;
  }
};

inline ExactDist exact_dist(const Ppm& model) {
  const auto& space = model.space();
  if (!space.enumerable())
    throw CapacityError("state space of size " + std::to_string(space.size()) + " exceeds enumeration cap " +
                        std::to_string(kEnumerationCap));
  model.check_finite();
  std::vector<double> neg(space.size());
  for (std::size_t x = 0; x < neg.size(); ++x) neg[x] = -model.energy(static_cast<State>(x));
  const double log_z = log_sum_exp(neg);
  for (double& v : neg) v -= log_z;
  return ExactDist{space, std::move(neg), log_z};
}

inline void require_same_space(const StateSpace& a, const StateSpace& b, const char* op) {
  if (!(a == b)) throw ShapeError(std::string(op) + ": state spaces differ");
}

/// Shannon entropy in nats; 0 ln 0 counts as 0.
inline double entropy(const ExactDist& dist) {
  std::vector<double> terms(dist.log_probs.size());
  for (std::size_t x = 0; x < terms.size(); ++x) {
    const double lp = dist.log_probs[x];
    terms[x] = std::isinf(lp) ? 0.0 : -std::exp(lp) * lp;
  }
  return pairwise_sum(terms);
}

/// -sum p ln q.
inline double cross_entropy(const ExactDist& p, const ExactDist& q) {
  require_same_space(p.space, q.space, "cross_entropy");
  std::vector<double> terms(p.log_probs.size());
  for (std::size_t x = 0; x < terms.size(); ++x) {
    const double lp = p.log_probs[x];
    terms[x] = std::isinf(lp) ? 0.0 : -std::exp(lp) * q.log_probs[x];
  }
  return pairwise_sum(terms);
}

/// KL(p || q) in nats.
inline double kl(const ExactDist& p, const ExactDist& q) {
  require_same_space(p.space, q.space, "kl");
  std::vector<double> terms(p.log_probs.size());
  for (std::size_t x = 0; x < terms.size(); ++x) {
    const double lp = p.log_probs[x];
    terms[x] = std::isinf(lp) ? 0.0 : std::exp(lp) * (lp - q.log_probs[x]);
  }
  return pairwise_sum(terms);
}

/// sum_x w(x) phi_model(x): the cross-expectation used by work and heat.
inline double energy_mean(const Ppm& model, const ExactDist& weights) {
  require_same_space(model.space(), weights.space, "energy_mean");
  std::vector<double> terms(weights.log_probs.size());
  for (std::size_t x = 0; x < terms.size(); ++x) {
    const double w = std::exp(weights.log_probs[x]);
    terms[x] = w == 0.0 ? 0.0 : w * model.energy(static_cast<State>(x));
  }
  return pairwise_sum(terms);
}

/// <d phi / d theta>_weights.
inline std::vector<double> energy_gradient_mean(const Ppm& model, const ExactDist& weights) {
  require_same_space(model.space(), weights.space, "energy_gradient_mean");
  std::vector<std::vector<double>> cols(model.dim(), std::vector<double>(weights.log_probs.size()));
  for (std::size_t x = 0; x < weights.log_probs.size(); ++x) {
    const double w = std::exp(weights.log_probs[x]);
    if (w == 0.0) continue;
    const auto g = model.energy_gradient(static_cast<State>(x));
    for (std::size_t a = 0; a < g.size(); ++a) cols[a][x] = w * g[a];
  }
  std::vector<double> out(model.dim());
  for (std::size_t a = 0; a < out.size(); ++a) out[a] = pairwise_sum(cols[a]);
  return out;
}

/// d<phi_theta>_{p_theta}/d theta = <d phi> - Cov(phi, d phi).
inline std::vector<double> mean_energy_gradient(const Ppm& model) {
  const auto dist = exact_dist(model);
  const double e_mean = energy_mean(model, dist);
  const auto g_mean = energy_gradient_mean(model, dist);
  std::vector<double> out(model.dim());
  for (std::size_t a = 0; a < out.size(); ++a) {
    std::vector<double> cov(dist.log_probs.size());
    for (std::size_t x = 0; x < cov.size(); ++x) {
      const double p = std::exp(dist.log_probs[x]);
      const auto g = model.energy_gradient(static_cast<State>(x));
      cov[x] = p * (model.energy(static_cast<State>(x)) - e_mean) * (g[a] - g_mean[a]);
    }
    out[a] = g_mean[a] - pairwise_sum(cov);
  }
  return out;
}

/// Inverse-CDF sampler over a materialized distribution.
class ExactSampler {
 public:
  explicit ExactSampler(const ExactDist& dist) : cdf_(dist.log_probs.size()) {
    double acc = 0.0;
    for (std::size_t x = 0; x < cdf_.size(); ++x) {
      acc += std::exp(dist.log_probs[x]);
      cdf_[x] = acc;
    }
  }

  State operator()(Rng& rng) const {
    const double u = rng.uniform() * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    // u can reach the last cumulative value only through rounding
    if (it == cdf_.end()) --it;
    // never return a zero-probability state
    while (it != cdf_.begin() && *it == *(it - 1)) --it;
    return static_cast<State>(it - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

inline std::vector<State> sample_exact(const ExactDist& dist, std::size_t n, Seed seed) {
  if (n < 1) throw InvalidArgument("sample_exact needs n >= 1");
  ExactSampler sampler(dist);
  Rng rng(seed);
  std::vector<State> out(n);
  for (auto& x : out) x = sampler(rng);
  return out;
}

inline std::vector<State> sample_exact(const Ppm& model, std::size_t n, Seed seed) {
  return sample_exact(exact_dist(model), n, seed);
}

// JSON: {"space": {"kind": ..., "m"|"c": ...}, "energy_form": ...,
//        "features": [...] | "layers": [...], "theta": [...]}

inline nlohmann::json to_json(const StateSpace& s) {
  switch (s.kind()) {
    case SpaceKind::two_state: return {{"kind", "two_state"}};
    case SpaceKind::spin_grid: return {{"kind", "spin_grid"}, {"m", s.arity()}};
    case SpaceKind::categorical: return {{"kind", "categorical"}, {"c", s.arity()}};
  }
  return {};
}

inline StateSpace space_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "two_state") return StateSpace::two_state();
    if (kind == "spin_grid") return StateSpace::spin_grid(j.at("m").get<int>());
    if (kind == "categorical") return StateSpace::categorical(j.at("c").get<int>());
    throw ValidationError("unknown space kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed space: ") + e.what());
  }
}

inline nlohmann::json to_json(const Ppm& m) {
  nlohmann::json j;
  j["space"] = to_json(m.space());
  if (m.form() == EnergyForm::linear_features) {
    j["energy_form"] = "linear_features";
    std::vector<std::string> fs;
    for (const auto& f : m.features()) fs.push_back(f.to_string());
    j["features"] = fs;
  } else {
    j["energy_form"] = "mlp_energy";
    j["layers"] = m.layers();
  }
  j["theta"] = m.theta();
  return j;
}

inline Ppm ppm_from_json(const nlohmann::json& j) {
  try {
    const auto space = space_from_json(j.at("space"));
    const auto form = j.at("energy_form").get<std::string>();
    auto theta = j.at("theta").get<std::vector<double>>();
    if (form == "linear_features") {
      std::vector<Feature> fs;
      for (const auto& s : j.at("features")) fs.push_back(Feature::parse(s.get<std::string>()));
      return Ppm::linear(space, std::move(fs), std::move(theta));
    }
    if (form == "mlp_energy") return Ppm::mlp(space, j.at("layers").get<std::vector<int>>(), std::move(theta));
    throw ValidationError("unknown energy_form '" + form + "'");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed model document: ") + e.what());
  }
}

}  // namespace thermolearn

#endif  // THERMOLEARN_MODEL_HPP
