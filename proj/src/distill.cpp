// SPDX-License-Identifier: Apache-2.0
#include "softdistill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "softdistill/errors.hpp"
#include "softdistill/random.hpp"

namespace softdistill {

std::string to_string(LabelMode mode) { return mode == LabelMode::kSoft ? "soft" : "hard"; }

std::string to_string(UnrollMode mode) {
  return mode == UnrollMode::kPerStep ? "per-step" : "full";
}

LabelMode parse_label_mode(const std::string& text) {
  if (text == "soft") return LabelMode::kSoft;
  if (text == "hard") return LabelMode::kHard;
  throw ConfigError("unknown label mode '" + text + "' (expected soft, hard)");
}

UnrollMode parse_unroll_mode(const std::string& text) {
  if (text == "per-step") return UnrollMode::kPerStep;
  if (text == "full") return UnrollMode::kFull;
  throw ConfigError("unknown unroll mode '" + text + "' (expected per-step, full)");
}

void DistillConfig::validate() const {
  if (distilled_count == 0) throw ConfigError("distill: distilled image count must be positive");
  if (epochs == 0 || steps == 0) throw ConfigError("distill: epochs and steps must be positive");
  if (batch_size == 0) throw ConfigError("distill: batch size must be positive");
  if (train_steps == 0) throw ConfigError("distill: training steps must be positive");
  if (!(outer_lr > 0.0) || !std::isfinite(outer_lr)) {
    throw ConfigError("distill: outer learning rate must be positive");
  }
  if (!(min_inner_lr > 0.0)) throw ConfigError("distill: minimum inner learning rate must be positive");
  if (!(inner_lr_init >= min_inner_lr) || !std::isfinite(inner_lr_init)) {
    throw ConfigError("distill: initial inner learning rate must be >= the minimum");
  }
}

namespace {

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

bool same_bits(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

// x - rate * g, as a constant.
Tensor descend(const Tensor& x, const Tensor& g, double rate) {
  return sub(x.detach(), scale(g.detach(), rate));
}

}  // namespace

bool DistilledSet::finite() const {
  return all_finite(images.data()) && all_finite(label_params.data()) && std::isfinite(inner_lr);
}

bool DistilledSet::bit_equal(const DistilledSet& other) const {
  return same_bits(images, other.images) && same_bits(label_params, other.label_params) &&
         std::memcmp(&inner_lr, &other.inner_lr, sizeof(double)) == 0;
}

std::vector<int> distilled_classes(std::size_t count, std::size_t classes) {
  std::vector<int> out(count);
  for (std::size_t m = 0; m < count; ++m) out[m] = static_cast<int>(m % classes);
  return out;
}

Tensor one_hot_labels(std::size_t count, std::size_t classes) {
  std::vector<double> values(count * classes, 0.0);
  for (std::size_t m = 0; m < count; ++m) values[m * classes + m % classes] = 1.0;
  return Tensor({count, classes}, std::move(values));
}

Targets distilled_targets(LabelMode mode, const Tensor& label_params) {
  if (mode == LabelMode::kHard) {
    return Targets::hard(distilled_classes(label_params.shape()[0], label_params.shape()[1]));
  }
  return Targets::soft(label_params);
}

DistilledSet init_distilled(const DistillConfig& config, const ModelConfig& model,
                            std::uint64_t seed) {
  config.validate();
  model.validate();
  Rng rng(derive_seed(seed, SeedStream::kDistilledImages));
  Shape shape{config.distilled_count, model.channels, model.height, model.width};
  std::vector<double> pixels = normal_vector(rng, numel(shape));
  DistilledSet d;
  d.images = Tensor(std::move(shape), std::move(pixels));
  d.label_params = one_hot_labels(config.distilled_count, model.classes);
  d.inner_lr = config.inner_lr_init;
  return d;
}

std::vector<Tensor> gradient_step(Graph& graph, const std::vector<Tensor>& theta,
                                  const ParamLoss& loss, const Tensor& lr) {
  std::vector<Tensor> params;
  params.reserve(theta.size());
  for (const Tensor& p : theta) params.push_back(p.requires_grad() ? p : graph.variable(p));
  const Tensor value = loss(params);
  if (!value.requires_grad()) return params;
  const std::vector<Tensor> grads = grad(value, params, /*create_graph=*/true);
  std::vector<Tensor> next;
  next.reserve(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    next.push_back(sub(params[k], mul(lr, grads[k])));
  }
  return next;
}

WeightSet inner_update(Graph& graph, const Model& model, const WeightSet& theta,
                       const Tensor& images, const Targets& targets, const Tensor& inner_lr) {
  auto next = gradient_step(
      graph, theta.tensors(),
      [&](const std::vector<Tensor>& params) {
        return model.loss(images, targets, theta.with_values(params));
      },
      inner_lr);
  return theta.with_values(std::move(next));
}

Tensor outer_loss(const Model& model, const Tensor& real_images, const std::vector<int>& real_labels,
                  const WeightSet& updated) {
  return model.loss(real_images, Targets::hard(real_labels), updated);
}

DistilledSet distill_step(const BilevelObjective& objective, const DistilledSet& start,
                          const std::vector<Tensor>& theta0, const DistillConfig& config,
                          std::size_t step_index, const HistorySink& sink) {
  const bool learn_labels = config.label_mode == LabelMode::kSoft;
  const double rate = config.outer_lr;
  DistilledSet d = start;

  const auto check_loss = [&](const Tensor& loss, std::size_t e, std::size_t i) {
    if (!std::isfinite(loss.item())) {
      throw NonFiniteError("distill: outer loss is not finite", step_index, e, i);
    }
    if (sink) sink({step_index, e, i, loss.item()});
  };

  // All three gradients come from the same loss before any is applied.
  const auto apply = [&](const std::vector<Tensor>& g, std::size_t e, std::size_t i) {
    DistilledSet next;
    next.images = descend(d.images, g[0], rate);
    next.label_params = learn_labels ? descend(d.label_params, g[1], rate) : d.label_params;
    next.inner_lr = std::max(config.min_inner_lr, d.inner_lr - rate * g[2].item());
    if (!next.finite()) {
      throw NonFiniteError("distill: distilled set became non-finite", step_index, e, i);
    }
    d = std::move(next);
  };

  const auto leaves = [&](Graph& graph) {
    return std::vector<Tensor>{
        graph.variable(d.images),
        learn_labels ? graph.variable(d.label_params) : d.label_params.detach(),
        graph.variable(Tensor::scalar(d.inner_lr))};
  };

  if (config.unroll_mode == UnrollMode::kPerStep) {
    std::vector<Tensor> theta;
    for (const Tensor& p : theta0) theta.push_back(p.detach());
    for (std::size_t e = 1; e <= config.epochs; ++e) {
      for (std::size_t i = 0; i < config.steps; ++i) {
        Graph graph;
        const std::vector<Tensor> vars = leaves(graph);
        std::vector<Tensor> next = gradient_step(
            graph, theta,
            [&](const std::vector<Tensor>& params) {
              return objective.inner(params, vars[0], vars[1]);
            },
            vars[2]);
        const Tensor loss = objective.outer(next);
        check_loss(loss, e, i);
        apply(grad(loss, vars), e, i);
        theta.clear();
        for (const Tensor& p : next) theta.push_back(p.detach());
      }
    }
    return d;
  }

  Graph graph;
  const std::vector<Tensor> vars = leaves(graph);
  std::vector<Tensor> theta;
  for (const Tensor& p : theta0) theta.push_back(p.detach());
  Tensor loss;
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    for (std::size_t i = 0; i < config.steps; ++i) {
      theta = gradient_step(
          graph, theta,
          [&](const std::vector<Tensor>& params) {
            return objective.inner(params, vars[0], vars[1]);
          },
          vars[2]);
      loss = objective.outer(theta);
      check_loss(loss, e, i);
    }
  }
  apply(grad(loss, vars), config.epochs, config.steps - 1);
  return d;
}

DistilledSet distill_step(const Model& model, const DistilledSet& d, const Tensor& real_images,
                          const std::vector<int>& real_labels, const WeightSet& theta0,
                          const DistillConfig& config, std::size_t step_index,
                          const HistorySink& sink) {
  const Targets real = Targets::hard(real_labels);
  BilevelObjective objective;
  objective.inner = [&](const std::vector<Tensor>& theta, const Tensor& images,
                        const Tensor& label_params) {
    return model.loss(images, distilled_targets(config.label_mode, label_params),
                      theta0.with_values(theta));
  };
  objective.outer = [&](const std::vector<Tensor>& theta) {
    return model.loss(real_images, real, theta0.with_values(theta));
  };
  return distill_step(objective, d, theta0.tensors(), config, step_index, sink);
}

DistillResult run_distillation(const Model& model, const LabeledImages& train,
                               const DistillConfig& config, std::uint64_t seed,
                               const RunOptions& options) {
  config.validate();
  if (train.empty()) throw DataError("distill: training set is empty");
  if (train.image_shape() != model.config().input_shape()) {
    throw DataError("distill: training images have shape " + to_string(train.image_shape()) +
                    ", model expects " + to_string(model.config().input_shape()));
  }
  const std::size_t classes = model.config().classes;
  const auto counts = train.class_counts(classes);
  for (int c : distilled_classes(config.distilled_count, classes)) {
    if (counts[static_cast<std::size_t>(c)] == 0) {
      throw DataError("distill: class " + std::to_string(c) + " has no training images");
    }
  }

  DistillResult result;
  result.history.reserve(config.train_steps * config.inner_iterations());
  const HistorySink sink = [&](const HistoryRow& row) { result.history.push_back(row); };

  DistilledSet d = init_distilled(config, model.config(), seed);
  for (std::size_t t = 1; t <= config.train_steps; ++t) {
    Rng rng(derive_seed(seed, SeedStream::kMinibatch, t));
    const auto idx = sample_without_replacement(rng, train.size(), config.batch_size);
    const WeightSet theta0 = model.init_weights(derive_seed(seed, SeedStream::kInitWeights, t));
    d = distill_step(model, d, train.batch(idx), train.batch_labels(idx), theta0, config, t, sink);

    if (options.checkpoint_every != 0 && t % options.checkpoint_every == 0) {
      Checkpoint cp{t, d};
      if (options.on_checkpoint) options.on_checkpoint(cp);
      if (options.keep_checkpoints) result.checkpoints.push_back(std::move(cp));
    }
  }
  result.final_set = std::move(d);
  return result;
}

WeightSet train_on_distilled(const Model& model, const DistilledSet& d,
                             const DistillConfig& config, std::uint64_t seed) {
  WeightSet weights = model.init_weights(seed);
  const Tensor images = d.images.detach();
  const Targets targets = distilled_targets(config.label_mode, d.label_params.detach());
  for (std::size_t j = 0; j < config.inner_iterations(); ++j) {
    Graph graph;
    std::vector<Tensor> params;
    for (const Parameter& p : weights) params.push_back(graph.variable(p.value));
    const Tensor loss = model.loss(images, targets, weights.with_values(params));
    const std::vector<Tensor> grads = grad(loss, params);
    std::vector<Tensor> next;
    for (std::size_t k = 0; k < params.size(); ++k) {
      next.push_back(descend(params[k], grads[k], d.inner_lr));
    }
    weights = weights.with_values(std::move(next));
  }
  return weights;
}

LabeledImages sample_balanced_subset(const LabeledImages& data, std::size_t per_class,
                                     std::size_t classes, std::uint64_t seed) {
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int l = data.label(i);
    if (l >= 0 && static_cast<std::size_t>(l) < classes) {
      by_class[static_cast<std::size_t>(l)].push_back(i);
    }
  }
  std::vector<std::size_t> chosen;
  for (std::size_t c = 0; c < classes; ++c) {
    if (by_class[c].size() < per_class) {
      throw DataError("baseline: class " + std::to_string(c) + " has " +
                      std::to_string(by_class[c].size()) + " images, " +
                      std::to_string(per_class) + " requested");
    }
    Rng rng(derive_seed(seed, SeedStream::kSubset, c));
    for (std::size_t k : sample_without_replacement(rng, by_class[c].size(), per_class)) {
      chosen.push_back(by_class[c][k]);
    }
  }
  Rng rng(derive_seed(seed, SeedStream::kSubset, classes));
  const auto order = sample_without_replacement(rng, chosen.size(), chosen.size());
  LabeledImages subset(data.image_shape());
  for (std::size_t k : order) subset.push_back(data.pixels(chosen[k]), data.label(chosen[k]));
  return subset;
}

BaselineResult train_baseline_subset(const Model& model, const LabeledImages& train,
                                     std::size_t per_class, const BaselineParams& params,
                                     std::uint64_t seed) {
  if (per_class == 0) throw ConfigError("baseline: per-class count must be positive");
  if (params.batch_size == 0 || params.max_steps == 0 || !(params.learning_rate > 0.0)) {
    throw ConfigError("baseline: batch size, step cap and learning rate must be positive");
  }
  const LabeledImages subset =
      sample_balanced_subset(train, per_class, model.config().classes, seed);

  BaselineResult result;
  result.weights = model.init_weights(seed);
  Rng rng(derive_seed(seed, SeedStream::kBaselineBatches));
  double best = std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  for (std::size_t step = 1; step <= params.max_steps; ++step) {
    const auto idx = sample_without_replacement(rng, subset.size(), params.batch_size);
    Graph graph;
    std::vector<Tensor> vars;
    for (const Parameter& p : result.weights) vars.push_back(graph.variable(p.value));
    const Tensor loss = model.loss(subset.batch(idx), Targets::hard(subset.batch_labels(idx)),
                                   result.weights.with_values(vars));
    const std::vector<Tensor> grads = grad(loss, vars);
    std::vector<Tensor> next;
    for (std::size_t k = 0; k < vars.size(); ++k) {
      next.push_back(descend(vars[k], grads[k], params.learning_rate));
    }
    result.weights = result.weights.with_values(std::move(next));
    result.steps = step;
    result.final_loss = loss.item();
    if (!std::isfinite(result.final_loss)) {
      throw NonFiniteError("baseline: training loss is not finite", step, 0, 0);
    }

    if (result.final_loss < best - params.min_improvement) {
      best = result.final_loss;
      stale = 0;
    } else if (++stale >= params.patience) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace softdistill
