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

#ifndef THERMOLEARN_CLASSIFIER_HPP
#define THERMOLEARN_CLASSIFIER_HPP

#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "thermolearn/data.hpp"
#include "thermolearn/errors.hpp"
#include "thermolearn/rng.hpp"

namespace thermolearn {

/// Conditional PPM p_theta(y|x): a tanh feed-forward network with a softmax
/// over class logits. It exists to study SGD noise; no thermodynamic ledger is
/// kept for it. Parameter layout matches Ppm::mlp (per layer: row-major
/// weights, then biases).
class ClassifierObjective {
 public:
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  ClassifierObjective(std::vector<int> layers, std::vector<double> theta, std::shared_ptr<const Dataset> data)
      : layers_(std::make_shared<const std::vector<int>>(std::move(layers))),
        theta_(std::move(theta)),
        data_(std::move(data)) {
    if (!data_ || !data_->labeled()) throw InvalidArgument("classifier needs a labeled dataset");
    if (layers_->size() < 2) throw ValidationError("classifier needs at least two layer sizes");
    if (layers_->front() != data_->inputs().cols()) throw ShapeError("first layer width must equal input dimension");
    if (theta_.size() != param_count(*layers_)) throw ShapeError("theta size does not match layer sizes");
  }

  static std::size_t param_count(const std::vector<int>& layers) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l)
      n += static_cast<std::size_t>(layers[l + 1]) * static_cast<std::size_t>(layers[l] + 1);
    return n;
  }

  /// Weights N(0, 1/fan_in), zero biases.
  static std::vector<double> initial_theta(const std::vector<int>& layers, Seed seed) {
    Rng rng(seed);
    std::vector<double> theta;
    theta.reserve(param_count(layers));
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(layers[l]));
      for (int k = 0; k < layers[l] * layers[l + 1]; ++k) theta.push_back(scale * rng.normal());
      for (int k = 0; k < layers[l + 1]; ++k) theta.push_back(0.0);
    }
    return theta;
  }

  /// Index of the first parameter of layer l (0-based over weight layers).
  std::size_t layer_offset(std::size_t l) const {
    std::size_t off = 0;
    for (std::size_t k = 0; k < l; ++k)
      off += static_cast<std::size_t>((*layers_)[k + 1]) * static_cast<std::size_t>((*layers_)[k] + 1);
    return off;
  }

  /// Weight layer a parameter index belongs to.
  std::size_t layer_of(std::size_t index) const {
    for (std::size_t l = 0; l + 1 < layers_->size(); ++l)
      if (index < layer_offset(l + 1)) return l;
    throw IndexError("parameter index out of range");
  }

  std::size_t weight_layers() const noexcept { return layers_->size() - 1; }
  const std::vector<int>& layers() const noexcept { return *layers_; }
  const std::vector<double>& theta() const noexcept { return theta_; }

  double loss(const std::vector<std::size_t>& ids) const { return evaluate(gather(ids), labels(ids), nullptr).loss; }

  std::vector<double> batch_gradient(const std::vector<std::size_t>& ids) const {
    std::vector<double> g(theta_.size());
    evaluate(gather(ids), labels(ids), &g);
    return g;
  }

  std::vector<double> full_gradient() const {
    std::vector<double> g(theta_.size());
    evaluate(data_->inputs(), data_->labels(), &g);
    return g;
  }

  /// Fraction of dataset items whose arg-max class equals the label.
  double accuracy() const { return evaluate(data_->inputs(), data_->labels(), nullptr).accuracy; }

  /// Full gradient and accuracy from a single forward pass.
  std::pair<std::vector<double>, double> full_gradient_and_accuracy() const {
    std::vector<double> g(theta_.size());
    const auto ev = evaluate(data_->inputs(), data_->labels(), &g);
    return {std::move(g), ev.accuracy};
  }

  ClassifierObjective with_theta(std::vector<double> theta) const {
    ClassifierObjective o = *this;
    o.theta_ = std::move(theta);
    return o;
  }

 private:
  struct Eval {
    double loss = 0.0;
    double accuracy = 0.0;
  };

  Eigen::MatrixXd gather(const std::vector<std::size_t>& ids) const {
    if (ids.empty()) throw InvalidArgument("empty batch");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(ids.size()), data_->inputs().cols());
    for (std::size_t k = 0; k < ids.size(); ++k) x.row(static_cast<Eigen::Index>(k)) = data_->inputs().row(static_cast<Eigen::Index>(ids[k]));
    return x;
  }

  std::vector<int> labels(const std::vector<std::size_t>& ids) const {
    std::vector<int> y(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) y[k] = data_->labels().at(ids[k]);
    return y;
  }

  Eval evaluate(const Eigen::MatrixXd& x, const std::vector<int>& y, std::vector<double>* grad) const {
    const std::size_t depth = layers_->size() - 1;
    const auto n = x.rows();
    std::vector<Eigen::Map<const RowMatrix>> w;
    std::vector<Eigen::Map<const Eigen::VectorXd>> b;
    std::size_t off = 0;
    for (std::size_t l = 0; l < depth; ++l) {
      const int in = (*layers_)[l], out = (*layers_)[l + 1];
      w.emplace_back(theta_.data() + off, out, in);
      off += static_cast<std::size_t>(in) * static_cast<std::size_t>(out);
      b.emplace_back(theta_.data() + off, out);
      off += static_cast<std::size_t>(out);
    }
    std::vector<Eigen::MatrixXd> acts{x};
    for (std::size_t l = 0; l < depth; ++l) {
      Eigen::MatrixXd z = acts.back() * w[l].transpose();
      z.rowwise() += b[l].transpose();
      if (l + 1 < depth) z = z.array().tanh().matrix();
      acts.push_back(std::move(z));
    }
    Eigen::MatrixXd& logits = acts.back();
    Eval ev;
    Eigen::MatrixXd probs(logits.rows(), logits.cols());
    double loss = 0.0;
    std::size_t correct = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int label = y[static_cast<std::size_t>(i)];
      if (label < 0 || label >= logits.cols()) throw IndexError("label outside class range");
      Eigen::Index arg = 0;
      const double hi = logits.row(i).maxCoeff(&arg);
      const Eigen::RowVectorXd e = (logits.row(i).array() - hi).exp().matrix();
      const double z = e.sum();
      probs.row(i) = e / z;
      loss += -(logits(i, label) - hi - std::log(z));
      if (arg == label) ++correct;
    }
    ev.loss = loss / static_cast<double>(n);
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    if (grad == nullptr) return ev;

    Eigen::MatrixXd delta = probs;
    for (Eigen::Index i = 0; i < n; ++i) delta(i, y[static_cast<std::size_t>(i)]) -= 1.0;
    delta /= static_cast<double>(n);
    std::vector<std::size_t> offsets(depth);
    off = 0;
    for (std::size_t l = 0; l < depth; ++l) {
      offsets[l] = off;
      off += static_cast<std::size_t>((*layers_)[l + 1]) * static_cast<std::size_t>((*layers_)[l] + 1);
    }
    for (std::size_t l = depth; l-- > 0;) {
      const int in = (*layers_)[l], out = (*layers_)[l + 1];
      Eigen::Map<RowMatrix> gw(grad->data() + offsets[l], out, in);
      Eigen::Map<Eigen::VectorXd> gb(grad->data() + offsets[l] + static_cast<std::size_t>(in) * static_cast<std::size_t>(out), out);
      gw.noalias() = delta.transpose() * acts[l];
      gb = delta.colwise().sum().transpose();
      if (l == 0) break;
      Eigen::MatrixXd back = delta * w[l];
      delta = back.array() * (1.0 - acts[l].array().square());
    }
    return ev;
  }

  std::shared_ptr<const std::vector<int>> layers_;
  std::vector<double> theta_;
  std::shared_ptr<const Dataset> data_;
};

}  // namespace thermolearn

#endif  // THERMOLEARN_CLASSIFIER_HPP
