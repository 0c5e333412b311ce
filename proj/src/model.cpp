// SPDX-License-Identifier: Apache-2.0
#include "softdistill/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "softdistill/errors.hpp"
#include "softdistill/random.hpp"

namespace softdistill {

// --- LabeledImages -----------------------------------------------------------

LabeledImages::LabeledImages(Shape image_shape)
    : image_shape_(std::move(image_shape)), image_size_(numel(image_shape_)) {
  if (image_shape_.size() != 3) {
    throw ShapeError("dataset: image shape must be (C, H, W), got " + to_string(image_shape_));
  }
}

void LabeledImages::push_back(std::span<const double> pixels, int label) {
  if (pixels.size() != image_size_) {
    throw ShapeError("dataset: expected " + std::to_string(image_size_) + " pixels, got " +
                     std::to_string(pixels.size()));
  }
  pixels_.insert(pixels_.end(), pixels.begin(), pixels.end());
  labels_.push_back(label);
}

std::span<const double> LabeledImages::pixels(std::size_t i) const {
  return std::span<const double>(pixels_).subspan(i * image_size_, image_size_);
}

Tensor LabeledImages::batch(std::span<const std::size_t> indices) const {
  std::vector<double> out;
  out.reserve(indices.size() * image_size_);
  for (std::size_t i : indices) {
    const auto px = pixels(i);
    out.insert(out.end(), px.begin(), px.end());
  }
  Shape shape{indices.size()};
  shape.insert(shape.end(), image_shape_.begin(), image_shape_.end());
  return Tensor(std::move(shape), std::move(out));
}

std::vector<int> LabeledImages::batch_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels_[i]);
  return out;
}

Tensor LabeledImages::all() const {
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return batch(idx);
}

std::vector<std::size_t> LabeledImages::class_counts(std::size_t classes) const {
  std::vector<std::size_t> counts(classes, 0);
  for (int l : labels_) {
    if (l >= 0 && static_cast<std::size_t>(l) < classes) ++counts[static_cast<std::size_t>(l)];
  }
  return counts;
}

// --- config ------------------------------------------------------------------

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::kLinear: return "linear";
    case Arch::kMlp: return "mlp";
    case Arch::kSmallConv: return "smallconv";
  }
  return "?";
}

std::string to_string(InitScheme scheme) {
  return scheme == InitScheme::kUniformFanIn ? "uniform-fan-in" : "normal";
}

Arch parse_arch(const std::string& text) {
  if (text == "linear") return Arch::kLinear;
  if (text == "mlp") return Arch::kMlp;
  if (text == "smallconv") return Arch::kSmallConv;
  throw ConfigError("unknown arch '" + text + "' (expected linear, mlp, smallconv)");
}

InitScheme parse_init_scheme(const std::string& text) {
  if (text == "uniform-fan-in") return InitScheme::kUniformFanIn;
  if (text == "normal") return InitScheme::kNormal;
  throw ConfigError("unknown init scheme '" + text + "' (expected uniform-fan-in, normal)");
}

void ModelConfig::validate() const {
  if (classes < 2) throw ConfigError("model: class count must be at least 2");
  if (channels == 0 || height == 0 || width == 0) {
    throw ConfigError("model: input dimensions must be positive");
  }
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("model: hidden sizes must be positive");
  }
  if (arch == Arch::kMlp && hidden.empty()) {
    throw ConfigError("model: mlp needs at least one hidden size");
  }
  if (arch == Arch::kSmallConv) {
    if (height < 8 || width < 8) throw ConfigError("model: smallconv needs height and width >= 8");
    if (hidden.size() != 2) throw ConfigError("model: smallconv takes exactly two channel counts");
  }
}

// --- WeightSet ---------------------------------------------------------------

const Tensor& WeightSet::at(const std::string& name) const {
  for (const Parameter& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ShapeError("weights: no parameter named '" + name + "'");
}

std::vector<Tensor> WeightSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) out.push_back(p.value);
  return out;
}

WeightSet WeightSet::with_values(std::vector<Tensor> values) const {
  if (values.size() != params_.size()) {
    throw ShapeError("weights: expected " + std::to_string(params_.size()) + " tensors");
  }
  std::vector<Parameter> out;
  out.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (values[i].shape() != params_[i].value.shape()) {
      throw ShapeError("weights: " + params_[i].name + " expects shape " +
                       to_string(params_[i].value.shape()) + ", got " +
                       to_string(values[i].shape()));
    }
    out.push_back({params_[i].name, std::move(values[i])});
  }
  return WeightSet(std::move(out));
}

WeightSet WeightSet::detached() const {
  std::vector<Parameter> out;
  out.reserve(params_.size());
  for (const Parameter& p : params_) out.push_back({p.name, p.value.detach()});
  return WeightSet(std::move(out));
}

bool WeightSet::bit_equal(const WeightSet& other) const {
  if (size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    const Tensor& a = params_[i].value;
    const Tensor& b = other.params_[i].value;
    if (params_[i].name != other.params_[i].name || a.shape() != b.shape()) return false;
    if (std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

// --- Model -------------------------------------------------------------------

Model::Model(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t k = config_.classes;
  switch (config_.arch) {
    case Arch::kLinear:
      layout_.push_back({"fc.weight", {config_.input_size(), k}});
      layout_.push_back({"fc.bias", {k}});
      break;
    case Arch::kMlp: {
      std::size_t in = config_.input_size();
      for (std::size_t i = 0; i < config_.hidden.size(); ++i) {
        const std::string prefix = "fc" + std::to_string(i);
        layout_.push_back({prefix + ".weight", {in, config_.hidden[i]}});
        layout_.push_back({prefix + ".bias", {config_.hidden[i]}});
        in = config_.hidden[i];
      }
      layout_.push_back({"out.weight", {in, k}});
      layout_.push_back({"out.bias", {k}});
      break;
    }
    case Arch::kSmallConv: {
      const std::size_t c1 = config_.hidden[0];
      const std::size_t c2 = config_.hidden[1];
      layout_.push_back({"conv1.weight", {c1, config_.channels, 3, 3}});
      layout_.push_back({"conv1.bias", {c1}});
      layout_.push_back({"conv2.weight", {c2, c1, 3, 3}});
      layout_.push_back({"conv2.bias", {c2}});
      const std::size_t flat = c2 * (config_.height / 4) * (config_.width / 4);
      layout_.push_back({"fc.weight", {flat, k}});
      layout_.push_back({"fc.bias", {k}});
      break;
    }
  }
}

WeightSet Model::init_weights(std::uint64_t seed) const {
  Rng rng(derive_seed(seed, SeedStream::kInitWeights));
  std::vector<Parameter> params;
  params.reserve(layout_.size());
  for (const auto& [name, shape] : layout_) {
    if (shape.size() == 1) {
      params.push_back({name, Tensor::zeros(shape)});
      continue;
    }
    // Dense weights are (fan_in, fan_out); conv weights are (out, in, kh, kw).
    const std::size_t fan_in = shape.size() == 2 ? shape[0] : shape[1] * shape[2] * shape[3];
    const double variance = 1.0 / static_cast<double>(fan_in);
    std::vector<double> values(numel(shape));
    if (config_.init == InitScheme::kUniformFanIn) {
      const double bound = std::sqrt(3.0 * variance);
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : values) v = dist(rng);
    } else {
      std::normal_distribution<double> dist(0.0, std::sqrt(variance));
      for (double& v : values) v = dist(rng);
    }
    params.push_back({name, Tensor(shape, std::move(values))});
  }
  return WeightSet(std::move(params));
}

void Model::check_weights(const WeightSet& weights) const {
  if (weights.size() != layout_.size()) {
    throw ShapeError("model: expected " + std::to_string(layout_.size()) + " parameters, got " +
                     std::to_string(weights.size()));
  }
  for (std::size_t i = 0; i < layout_.size(); ++i) {
    if (weights[i].value.shape() != layout_[i].second) {
      throw ShapeError("model: parameter " + layout_[i].first + " expects shape " +
                       to_string(layout_[i].second) + ", got " +
                       to_string(weights[i].value.shape()));
    }
  }
}

namespace {

// (B, n) + bias(n), broadcast over rows via an outer product with ones.
Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t rows = x.shape()[0];
  const std::size_t cols = x.shape()[1];
  return add(x, matmul(Tensor::full({rows, 1}, 1.0), reshape(bias, {1, cols})));
}

// (B, C, H, W) + bias(C), broadcast over batch and pixels.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
  const Shape& s = x.shape();
  const std::size_t plane = s[2] * s[3];
  const Tensor per_image = matmul(reshape(bias, {s[1], 1}), Tensor::full({1, plane}, 1.0));
  const Tensor batch =
      matmul(Tensor::full({s[0], 1}, 1.0), reshape(per_image, {1, s[1] * plane}));
  return add(x, reshape(batch, s));
}

}  // namespace

Tensor Model::forward(const WeightSet& weights, const Tensor& images) const {
  check_weights(weights);
  const Shape expected = config_.input_shape();
  if (images.rank() != 4 || !std::equal(expected.begin(), expected.end(), images.shape().begin() + 1)) {
    throw ShapeError("model: expected image batch (B, " + std::to_string(config_.channels) + ", " +
                     std::to_string(config_.height) + ", " + std::to_string(config_.width) +
                     "), got " + to_string(images.shape()));
  }
  const std::size_t batch = images.shape()[0];

  switch (config_.arch) {
    case Arch::kLinear: {
      const Tensor flat = reshape(images, {batch, config_.input_size()});
      return add_row_bias(matmul(flat, weights[0].value), weights[1].value);
    }
    case Arch::kMlp: {
      Tensor h = reshape(images, {batch, config_.input_size()});
      const std::size_t layers = config_.hidden.size();
      for (std::size_t i = 0; i < layers; ++i) {
        h = relu(add_row_bias(matmul(h, weights[2 * i].value), weights[2 * i + 1].value));
      }
      return add_row_bias(matmul(h, weights[2 * layers].value), weights[2 * layers + 1].value);
    }
    case Arch::kSmallConv: {
      Tensor h = conv2d(images, weights[0].value, 1, 1);
      h = max_pool2d(relu(add_channel_bias(h, weights[1].value)), 2, 2);
      h = conv2d(h, weights[2].value, 1, 1);
      h = max_pool2d(relu(add_channel_bias(h, weights[3].value)), 2, 2);
      const Tensor flat = reshape(h, {batch, weights[4].value.shape()[0]});
      return add_row_bias(matmul(flat, weights[4].value), weights[5].value);
    }
  }
  throw ShapeError("model: unknown arch");
}

Tensor Model::loss(const Tensor& images, const Targets& targets, const WeightSet& weights) const {
  const Tensor logits = forward(weights, images);
  const std::size_t batch = logits.shape()[0];
  const std::size_t k = config_.classes;

  Tensor q;
  if (targets.is_hard()) {
    const auto& cls = targets.classes();
    if (cls.size() != batch) {
      throw ShapeError("loss: " + std::to_string(cls.size()) + " labels for a batch of " +
                       std::to_string(batch));
    }
    std::vector<double> onehot(batch * k, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      if (cls[b] < 0 || static_cast<std::size_t>(cls[b]) >= k) {
        throw ShapeError("loss: label " + std::to_string(cls[b]) + " outside [0, " +
                         std::to_string(k) + ")");
      }
      onehot[b * k + static_cast<std::size_t>(cls[b])] = 1.0;
    }
    q = Tensor({batch, k}, std::move(onehot));
  } else {
    const Tensor& params = targets.label_params();
    if (params.shape() != Shape{batch, k}) {
      throw ShapeError("loss: soft labels must have shape " + to_string(Shape{batch, k}) +
                       ", got " + to_string(params.shape()));
    }
    q = softmax(params);
  }
  return scale(sum(mul(q, log_softmax(logits))), -1.0 / static_cast<double>(batch));
}

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.shape()[0];
  const std::size_t cols = logits.shape()[1];
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (logits[r * cols + c] > logits[r * cols + best]) best = c;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> Model::predict(const WeightSet& weights, const Tensor& images) const {
  return argmax_rows(forward(weights.detached(), images.detach()));
}

double Model::accuracy(const WeightSet& weights, const LabeledImages& data) const {
  if (data.empty()) return 0.0;
  const WeightSet constant = weights.detached();
  constexpr std::size_t kChunk = 512;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(data.size(), start + kChunk); ++i) idx.push_back(i);
    const auto pred = argmax_rows(forward(constant, data.batch(idx)));
    for (std::size_t j = 0; j < idx.size(); ++j) correct += pred[j] == data.label(idx[j]) ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace softdistill
