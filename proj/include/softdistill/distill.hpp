// SPDX-License-Identifier: Apache-2.0
//
// Learns a tiny synthetic training set: M images, M label vectors and one
// inner learning rate, such that a few gradient steps on them move freshly
// initialized weights toward a low loss on real data.
//
// Each inner iteration takes theta' = theta - lr * grad_theta loss(x_syn, y_syn, theta),
// evaluates the real-data loss at theta', and descends that loss with respect
// to x_syn, y_syn and lr. The gradient flows through the inner gradient, so it
// needs second derivatives of the model loss.
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "softdistill/dataset.hpp"
#include "softdistill/model.hpp"
#include "softdistill/tensor.hpp"

namespace softdistill {

enum class LabelMode { kSoft, kHard };

/// kPerStep differentiates only through the latest inner update, treating the
/// incoming weights as constants, and updates the synthetic data after every
/// inner iteration. kFull keeps the whole chain of E*I updates on one graph and
/// updates once per real minibatch.
enum class UnrollMode { kPerStep, kFull };

std::string to_string(LabelMode mode);
std::string to_string(UnrollMode mode);
LabelMode parse_label_mode(const std::string& text);
UnrollMode parse_unroll_mode(const std::string& text);

struct DistillConfig {
  std::size_t distilled_count = 3;  // M
  std::size_t epochs = 3;           // E
  std::size_t steps = 3;            // I
  double outer_lr = 0.01;           // alpha
  std::size_t batch_size = 64;      // K
  std::size_t train_steps = 100;    // T
  double inner_lr_init = 0.02;
  double min_inner_lr = 1e-6;
  LabelMode label_mode = LabelMode::kSoft;
  UnrollMode unroll_mode = UnrollMode::kPerStep;

  std::size_t inner_iterations() const { return epochs * steps; }
  /// Throws ConfigError.
  void validate() const;
};

struct DistilledSet {
  Tensor images;        // (M, C, H, W)
  Tensor label_params;  // (M, classes); row softmax is the target distribution
  double inner_lr = 0.0;

  std::size_t count() const { return images.shape().at(0); }
  std::size_t classes() const { return label_params.shape().at(1); }
  bool finite() const;
  bool bit_equal(const DistilledSet& other) const;
};

/// Class each distilled image stands for: image m belongs to class m mod K.
std::vector<int> distilled_classes(std::size_t count, std::size_t classes);

/// Identity-style rows: row m is one-hot at class m mod K.
Tensor one_hot_labels(std::size_t count, std::size_t classes);

/// Targets used by the inner loss: the (possibly graph-connected) soft label
/// parameters, or the fixed per-image classes in hard mode.
Targets distilled_targets(LabelMode mode, const Tensor& label_params);

DistilledSet init_distilled(const DistillConfig& config, const ModelConfig& model,
                            std::uint64_t seed);

using ParamLoss = std::function<Tensor(const std::vector<Tensor>& theta)>;

/// theta - lr * grad_theta loss(theta) with the gradient kept on the graph.
/// Constant entries of theta are registered on the graph first, so the result
/// is differentiable with respect to whatever loss and lr depend on.
std::vector<Tensor> gradient_step(Graph& graph, const std::vector<Tensor>& theta,
                                  const ParamLoss& loss, const Tensor& lr);

/// gradient_step on the model loss over the distilled batch.
WeightSet inner_update(Graph& graph, const Model& model, const WeightSet& theta,
                       const Tensor& images, const Targets& targets, const Tensor& inner_lr);

/// Hard-label cross entropy of the updated weights on a real minibatch.
Tensor outer_loss(const Model& model, const Tensor& real_images, const std::vector<int>& real_labels,
                  const WeightSet& updated);

struct HistoryRow {
  std::size_t step;   // t, 1-based
  std::size_t epoch;  // e, 1-based
  std::size_t inner;  // i, 0-based
  double loss;
};

using HistorySink = std::function<void(const HistoryRow&)>;

/// The two losses of the bilevel problem, abstracted from the model so small
/// closed-form problems can drive the same update loop.
struct BilevelObjective {
  // Loss of weights theta on the synthetic data.
  std::function<Tensor(const std::vector<Tensor>& theta, const Tensor& images,
                       const Tensor& label_params)>
      inner;
  // Loss of weights theta on the real minibatch.
  std::function<Tensor(const std::vector<Tensor>& theta)> outer;
};

DistilledSet distill_step(const BilevelObjective& objective, const DistilledSet& d,
                          const std::vector<Tensor>& theta0, const DistillConfig& config,
                          std::size_t step_index = 1, const HistorySink& sink = {});

/// Updates for one real minibatch: E epochs of I inner
/// iterations starting from theta0. Throws NonFiniteError on NaN/Inf.
DistilledSet distill_step(const Model& model, const DistilledSet& d, const Tensor& real_images,
                          const std::vector<int>& real_labels, const WeightSet& theta0,
                          const DistillConfig& config, std::size_t step_index = 1,
                          const HistorySink& sink = {});

struct Checkpoint {
  std::size_t step;
  DistilledSet set;
};

struct DistillResult {
  DistilledSet final_set;
  std::vector<HistoryRow> history;
  std::vector<Checkpoint> checkpoints;
};

struct RunOptions {
  std::size_t checkpoint_every = 10;  // 0 disables
  std::function<void(const Checkpoint&)> on_checkpoint;
  bool keep_checkpoints = true;
};

/// Full distillation: T steps, each with a fresh size-K real minibatch and
/// fresh initial weights drawn from the per-step seed stream.
DistillResult run_distillation(const Model& model, const LabeledImages& train,
                               const DistillConfig& config, std::uint64_t seed,
                               const RunOptions& options = {});

/// Fresh weights from seed, then E*I plain gradient steps on the distilled set
/// with its learned rate.
WeightSet train_on_distilled(const Model& model, const DistilledSet& d,
                             const DistillConfig& config, std::uint64_t seed);

struct BaselineParams {
  double learning_rate = 0.1;
  std::size_t batch_size = 64;
  std::size_t max_steps = 2000;
  // Converged once the best loss has not improved by min_improvement for
  // patience consecutive steps.
  std::size_t patience = 50;
  double min_improvement = 1e-4;
};

struct BaselineResult {
  WeightSet weights;
  std::size_t steps = 0;
  double final_loss = 0.0;
  bool converged = false;
};

/// per_class images of every class, drawn without replacement, order shuffled.
/// Throws DataError when a class has fewer than per_class images.
LabeledImages sample_balanced_subset(const LabeledImages& data, std::size_t per_class,
                                     std::size_t classes, std::uint64_t seed);

/// Random class-balanced subset trained from scratch by minibatch SGD.
BaselineResult train_baseline_subset(const Model& model, const LabeledImages& train,
                                     std::size_t per_class, const BaselineParams& params,
                                     std::uint64_t seed);

}  // namespace softdistill
