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

#ifndef THERMOLEARN_DATA_HPP
#define THERMOLEARN_DATA_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "thermolearn/errors.hpp"
#include "thermolearn/model.hpp"
#include "thermolearn/rng.hpp"

namespace thermolearn {

/// Where a dataset came from; enough to rebuild it.
struct DatasetSource {
  enum class Kind { synthetic, idx_files, synthetic_classes };
  Kind kind = Kind::synthetic;
  nlohmann::json target;  // model document for `synthetic`
  Seed seed = 0;
  std::string images_path;
  std::string labels_path;
};

/// Training set B. Synthetic sets hold microstate indices; labeled sets hold
/// one input row per item (pixels scaled to [0,1]) and a class label.
class Dataset {
 public:
  static Dataset of_states(std::vector<State> states, DatasetSource source) {
    if (states.empty()) throw InvalidArgument("dataset must be non-empty");
    Dataset d;
    d.states_ = std::move(states);
    d.source_ = std::move(source);
    return d;
  }

  static Dataset of_examples(Eigen::MatrixXd inputs, std::vector<int> labels, DatasetSource source) {
    if (labels.empty()) throw InvalidArgument("dataset must be non-empty");
    if (static_cast<std::size_t>(inputs.rows()) != labels.size())
      throw ShapeError("inputs and labels disagree on item count");
    Dataset d;
    d.inputs_ = std::move(inputs);
    d.labels_ = std::move(labels);
    d.source_ = std::move(source);
    return d;
  }

  bool labeled() const noexcept { return !labels_.empty(); }
  std::size_t size() const noexcept { return labeled() ? labels_.size() : states_.size(); }
  const std::vector<State>& states() const noexcept { return states_; }
  const Eigen::MatrixXd& inputs() const noexcept { return inputs_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const DatasetSource& source() const noexcept { return source_; }

  /// Keeps the first n items (labeled sets only; used for desk-scale subsets).
  Dataset head(std::size_t n) const {
    if (n == 0 || n > size()) throw InvalidArgument("head: bad subset size");
    if (!labeled()) return of_states({states_.begin(), states_.begin() + static_cast<long>(n)}, source_);
    return of_examples(inputs_.topRows(static_cast<Eigen::Index>(n)),
                       {labels_.begin(), labels_.begin() + static_cast<long>(n)}, source_);
  }

 private:
  Dataset() = default;
  std::vector<State> states_;
  Eigen::MatrixXd inputs_;
  std::vector<int> labels_;
  DatasetSource source_;
};

/// n i.i.d. draws from the target model.
inline Dataset make_synthetic(const Ppm& target, std::size_t n, Seed seed) {
  DatasetSource src;
  src.kind = DatasetSource::Kind::synthetic;
  src.target = to_json(target);
  src.seed = seed;
  return Dataset::of_states(sample_exact(target, n, seed), std::move(src));
}

/// Empirical distribution of a state dataset.
inline std::vector<double> empirical_probs(const Dataset& data, std::size_t space_size) {
  std::vector<double> p(space_size, 0.0);
  for (State x : data.states()) {
    if (x >= space_size) throw IndexError("dataset item outside state space");
    p[x] += 1.0;
  }
  for (double& v : p) v /= static_cast<double>(data.size());
  return p;
}

// ---------------------------------------------------------------------------
// IDX (big-endian). Images: magic 0x00000803, count, rows, cols, then bytes.
// Labels: magic 0x00000801, count, then bytes.

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<std::vector<std::uint8_t>> images;
};

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& buf, std::size_t offset, const std::string& what) {
  if (offset + 4 > buf.size()) throw FormatError("truncated " + what, buf.size());
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  buf.push_back(static_cast<std::uint8_t>(v >> 24));
  buf.push_back(static_cast<std::uint8_t>(v >> 16));
  buf.push_back(static_cast<std::uint8_t>(v >> 8));
  buf.push_back(static_cast<std::uint8_t>(v));
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& buf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("short write to '" + path + "'");
}

}  // namespace detail

inline IdxImages read_idx_images(const std::string& path) {
  const auto buf = detail::read_file(path);
  const auto magic = detail::read_be32(buf, 0, "image header");
  if (magic != kIdxImagesMagic) throw FormatError("image file magic is not 0x00000803", 0);
  const auto count = detail::read_be32(buf, 4, "image header");
  IdxImages out;
  out.rows = detail::read_be32(buf, 8, "image header");
  out.cols = detail::read_be32(buf, 12, "image header");
  const std::size_t pixels = std::size_t{out.rows} * out.cols;
  const std::size_t need = 16 + pixels * count;
  if (buf.size() < need) throw FormatError("truncated pixel section", buf.size());
  out.images.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto* p = buf.data() + 16 + i * pixels;
    out.images[i].assign(p, p + pixels);
  }
  return out;
}

inline std::vector<std::uint8_t> read_idx_labels(const std::string& path) {
  const auto buf = detail::read_file(path);
  const auto magic = detail::read_be32(buf, 0, "label header");
  if (magic != kIdxLabelsMagic) throw FormatError("label file magic is not 0x00000801", 0);
  const auto count = detail::read_be32(buf, 4, "label header");
  if (buf.size() < 8 + std::size_t{count}) throw FormatError("truncated label section", buf.size());
  return {buf.begin() + 8, buf.begin() + 8 + count};
}

inline void write_idx_images(const std::string& path, const IdxImages& images) {
  std::vector<std::uint8_t> buf;
  detail::put_be32(buf, kIdxImagesMagic);
  detail::put_be32(buf, static_cast<std::uint32_t>(images.images.size()));
  detail::put_be32(buf, images.rows);
  detail::put_be32(buf, images.cols);
  for (const auto& img : images.images) {
    if (img.size() != std::size_t{images.rows} * images.cols) throw ShapeError("image size differs from rows*cols");
    buf.insert(buf.end(), img.begin(), img.end());
  }
  detail::write_file(path, buf);
}

inline void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> buf;
  detail::put_be32(buf, kIdxLabelsMagic);
  detail::put_be32(buf, static_cast<std::uint32_t>(labels.size()));
  buf.insert(buf.end(), labels.begin(), labels.end());
  detail::write_file(path, buf);
}

/// Loads an IDX image/label pair; pixels are divided by 255.
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto images = read_idx_images(images_path);
  const auto labels = read_idx_labels(labels_path);
  if (labels.size() != images.images.size())
    throw FormatError("label count " + std::to_string(labels.size()) + " != image count " +
                          std::to_string(images.images.size()),
                      4);
  const auto n = static_cast<Eigen::Index>(images.images.size());
  const auto d = static_cast<Eigen::Index>(std::size_t{images.rows} * images.cols);
  Eigen::MatrixXd inputs(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < d; ++k)
      inputs(i, k) = images.images[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] / 255.0;
  DatasetSource src;
  src.kind = DatasetSource::Kind::idx_files;
  src.images_path = images_path;
  src.labels_path = labels_path;
  return Dataset::of_examples(std::move(inputs), {labels.begin(), labels.end()}, std::move(src));
}

/// Synthetic image-classification set used when no MNIST files are supplied:
/// each class has a random blob prototype; items are the prototype plus pixel
/// noise, quantized to bytes so the set survives an IDX round trip unchanged.
/// A fraction `label_flip` of items gets a uniformly random label, which keeps
/// the loss away from zero the way ambiguous digits do.
struct SyntheticClasses {
  IdxImages images;
  std::vector<std::uint8_t> labels;
};

inline SyntheticClasses make_synthetic_classes(std::size_t n, int classes, std::uint32_t rows, std::uint32_t cols,
                                               Seed seed, double pixel_noise = 0.5, double label_flip = 0.15) {
  if (classes < 2 || classes > 256 || rows == 0 || cols == 0) throw InvalidArgument("bad synthetic class shape");
  Rng rng(seed);
  const std::size_t pixels = std::size_t{rows} * cols;
  std::vector<std::vector<double>> protos(static_cast<std::size_t>(classes), std::vector<double>(pixels, 0.0));
  for (auto& proto : protos) {
    for (int blob = 0; blob < 3; ++blob) {
      const double cy = rng.uniform() * rows, cx = rng.uniform() * cols;
      const double radius = 2.0 + 3.0 * rng.uniform();
      for (std::uint32_t y = 0; y < rows; ++y)
        for (std::uint32_t x = 0; x < cols; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          proto[std::size_t{y} * cols + x] += std::exp(-d2 / (2.0 * radius * radius));
        }
    }
  }
  SyntheticClasses out;
  out.images.rows = rows;
  out.images.cols = cols;
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(classes)));
    std::vector<std::uint8_t> img(pixels);
    for (std::size_t k = 0; k < pixels; ++k) {
      const double v = std::clamp(protos[label][k] + pixel_noise * rng.normal(), 0.0, 1.0);
      img[k] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    const bool flip = rng.uniform() < label_flip;
    const auto shown = flip ? static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(classes))) : label;
    out.images.images.push_back(std::move(img));
    out.labels.push_back(static_cast<std::uint8_t>(shown));
  }
  return out;
}

inline Dataset to_dataset(const SyntheticClasses& s, Seed seed) {
  const auto n = static_cast<Eigen::Index>(s.labels.size());
  const auto d = static_cast<Eigen::Index>(std::size_t{s.images.rows} * s.images.cols);
  Eigen::MatrixXd inputs(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < d; ++k)
      inputs(i, k) = s.images.images[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] / 255.0;
  DatasetSource src;
  src.kind = DatasetSource::Kind::synthetic_classes;
  src.seed = seed;
  return Dataset::of_examples(std::move(inputs), {s.labels.begin(), s.labels.end()}, std::move(src));
}

// ---------------------------------------------------------------------------

/// Mini-batch stream b_1, b_2, ...: each batch is `batch_size` item indices
/// drawn i.i.d. with replacement. Single consumer.
class BatchStream {
 public:
  BatchStream(std::shared_ptr<const Dataset> data, std::size_t batch_size, Seed seed)
      : data_(std::move(data)), batch_size_(batch_size), rng_(seed) {
    if (!data_) throw InvalidArgument("BatchStream needs a dataset");
    if (batch_size_ < 1) throw InvalidArgument("batch_size must be >= 1");
  }

  std::vector<std::size_t> next_batch() {
    std::vector<std::size_t> ids(batch_size_);
    for (auto& id : ids) id = static_cast<std::size_t>(rng_.below(data_->size()));
    return ids;
  }

  const Dataset& dataset() const noexcept { return *data_; }
  std::shared_ptr<const Dataset> dataset_ptr() const noexcept { return data_; }
  std::size_t batch_size() const noexcept { return batch_size_; }

 private:
  std::shared_ptr<const Dataset> data_;
  std::size_t batch_size_;
  Rng rng_;
};

/// Microstates selected by a batch of item indices.
inline std::vector<State> batch_states(const Dataset& data, const std::vector<std::size_t>& ids) {
  std::vector<State> out(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) out[k] = data.states().at(ids[k]);
  return out;
}

// Manifest: {"source": {...}, "seed": s, "n": n}

inline nlohmann::json manifest_json(const Dataset& d) {
  nlohmann::json src;
  switch (d.source().kind) {
    case DatasetSource::Kind::synthetic: src = {{"kind", "synthetic"}, {"target", d.source().target}}; break;
    case DatasetSource::Kind::idx_files:
      src = {{"kind", "idx_files"}, {"images", d.source().images_path}, {"labels", d.source().labels_path}};
      break;
    case DatasetSource::Kind::synthetic_classes: src = {{"kind", "synthetic_classes"}}; break;
  }
  return {{"source", src}, {"seed", d.source().seed}, {"n", d.size()}};
}

/// Rebuilds a dataset from its manifest (synthetic and idx_files sources).
inline Dataset dataset_from_manifest(const nlohmann::json& j) {
  try {
    const auto& src = j.at("source");
    const auto kind = src.at("kind").get<std::string>();
    if (kind == "synthetic")
      return make_synthetic(ppm_from_json(src.at("target")), j.at("n").get<std::size_t>(), j.at("seed").get<Seed>());
    if (kind == "idx_files") {
      auto d = load_idx(src.at("images").get<std::string>(), src.at("labels").get<std::string>());
      const auto n = j.at("n").get<std::size_t>();
      return n < d.size() ? d.head(n) : d;
    }
    throw ValidationError("manifest source kind '" + kind + "' cannot be rebuilt");
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed dataset manifest: ") + e.what());
  }
}

}  // namespace thermolearn

#endif  // THERMOLEARN_DATA_HPP
