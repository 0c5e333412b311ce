// SPDX-License-Identifier: Apache-2.0
//
// Small classifiers f(x; theta) and their cross-entropy loss. Weights are plain
// tensors so the same forward pass serves constant weights, leaf variables, and
// weights produced by a differentiable update step.
#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "softdistill/dataset.hpp"
#include "softdistill/tensor.hpp"

namespace softdistill {

enum class Arch { kLinear, kMlp, kSmallConv };
enum class InitScheme { kUniformFanIn, kNormal };

std::string to_string(Arch arch);
std::string to_string(InitScheme scheme);
Arch parse_arch(const std::string& text);
InitScheme parse_init_scheme(const std::string& text);

struct ModelConfig {
  Arch arch = Arch::kMlp;
  std::size_t channels = 1;
  std::size_t height = 8;
  std::size_t width = 8;
  // mlp: hidden layer widths; smallconv: the two conv channel counts.
  std::vector<std::size_t> hidden{32, 16};
  std::size_t classes = 3;
  InitScheme init = InitScheme::kUniformFanIn;

  Shape input_shape() const { return {channels, height, width}; }
  std::size_t input_size() const { return channels * height * width; }
  /// Throws ConfigError.
  void validate() const;
};

struct Parameter {
  std::string name;
  Tensor value;
};

/// Ordered named parameters. Names and shapes depend only on the ModelConfig.
class WeightSet {
 public:
  WeightSet() = default;
  explicit WeightSet(std::vector<Parameter> params) : params_(std::move(params)) {}

  std::size_t size() const noexcept { return params_.size(); }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  const Tensor& at(const std::string& name) const;
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::vector<Tensor> tensors() const;
  /// Same names, new values (shapes must match).
  WeightSet with_values(std::vector<Tensor> values) const;
  WeightSet detached() const;
  bool bit_equal(const WeightSet& other) const;

 private:
  std::vector<Parameter> params_;
};

/// Either hard class indices, or unconstrained per-class scores whose row
/// softmax is the target distribution.
class Targets {
 public:
  static Targets hard(std::vector<int> classes) { return Targets(std::move(classes)); }
  static Targets soft(Tensor label_params) { return Targets(std::move(label_params)); }

  bool is_hard() const { return std::holds_alternative<std::vector<int>>(value_); }
  const std::vector<int>& classes() const { return std::get<std::vector<int>>(value_); }
  const Tensor& label_params() const { return std::get<Tensor>(value_); }

 private:
  explicit Targets(std::variant<std::vector<int>, Tensor> v) : value_(std::move(v)) {}
  std::variant<std::vector<int>, Tensor> value_;
};

class Model {
 public:
  /// Throws ConfigError for an invalid config.
  explicit Model(ModelConfig config);

  const ModelConfig& config() const noexcept { return config_; }

  WeightSet init_weights(std::uint64_t seed) const;

  /// images: (B, C, H, W) -> logits (B, classes).
  Tensor forward(const WeightSet& weights, const Tensor& images) const;

  /// Mean over the batch of -sum_c q_c log softmax(logits)_c.
  Tensor loss(const Tensor& images, const Targets& targets, const WeightSet& weights) const;

  std::vector<int> predict(const WeightSet& weights, const Tensor& images) const;
  /// Batched prediction over a whole dataset, without recording.
  double accuracy(const WeightSet& weights, const LabeledImages& data) const;

 private:
  void check_weights(const WeightSet& weights) const;

  ModelConfig config_;
  std::vector<std::pair<std::string, Shape>> layout_;
};

/// Argmax per row of a (B, K) tensor; lowest index wins ties.
std::vector<int> argmax_rows(const Tensor& logits);

}  // namespace softdistill
