// SPDX-License-Identifier: Apache-2.0
#include "softdistill/classify.hpp"

#include <algorithm>

#include "softdistill/errors.hpp"

namespace softdistill {

VoteResult vote(std::span<const Category> labels, double epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
    throw ConfigError("vote: epsilon must be in [0, 1]");
  }
  VoteResult v;
  for (Category c : labels) {
    switch (c) {
      case Category::kPositive: ++v.num_positive; break;
      case Category::kNegative: ++v.num_negative; break;
      case Category::kIrrelevant: ++v.num_irrelevant; break;
      case Category::kDiscarded: break;
    }
  }
  const std::size_t evidence = v.num_positive + v.num_negative;
  if (evidence == 0) {
    v.no_evidence = true;
    v.decision = 0;
    return v;
  }
  v.ratio = static_cast<double>(v.num_positive) / static_cast<double>(evidence);
  v.decision = *v.ratio >= epsilon ? 1 : 0;
  return v;
}

double harmonic_mean(double a, double b) {
  const double denom = a + b;
  return denom == 0.0 ? 0.0 : 2.0 * a * b / denom;
}

Metrics metrics(std::size_t tp, std::size_t fn, std::size_t tn, std::size_t fp) {
  if (tp + fn == 0) throw DataError("metrics: no positive images (TP + FN = 0)");
  if (tn + fp == 0) throw DataError("metrics: no negative images (TN + FP = 0)");
  Metrics m;
  m.sen = static_cast<double>(tp) / static_cast<double>(tp + fn);
  m.spe = static_cast<double>(tn) / static_cast<double>(tn + fp);
  m.hm = harmonic_mean(m.sen, m.spe);
  return m;
}

void Confusion::add(ImageLabel truth, int decision) {
  if (truth == ImageLabel::kGastritis) {
    (decision == 1 ? tp : fn) += 1;
  } else {
    (decision == 1 ? fp : tn) += 1;
  }
}

Confusion& Confusion::operator+=(const Confusion& other) {
  tp += other.tp;
  fn += other.fn;
  tn += other.tn;
  fp += other.fp;
  return *this;
}

std::vector<Category> predict_patches(const Model& model, const WeightSet& weights,
                                      const PatchGrid& grid) {
  const std::size_t p = grid.params().patch_size;
  const ModelConfig& cfg = model.config();
  if (cfg.channels != 1 || cfg.height != p || cfg.width != p) {
    throw ShapeError("predict: model input " + to_string(cfg.input_shape()) +
                     " does not match " + std::to_string(p) + "x" + std::to_string(p) +
                     " patches");
  }
  if (cfg.classes != kPatchClasses) {
    throw ShapeError("predict: patch voting needs a " + std::to_string(kPatchClasses) +
                     "-class model");
  }
  const WeightSet constant = weights.detached();
  constexpr std::size_t kChunk = 256;
  std::vector<Category> out;
  out.reserve(grid.size());
  for (std::size_t start = 0; start < grid.size(); start += kChunk) {
    const std::size_t n = std::min(kChunk, grid.size() - start);
    std::vector<double> batch;
    batch.reserve(n * p * p);
    for (std::size_t i = start; i < start + n; ++i) {
      const auto px = grid.pixels(i);
      batch.insert(batch.end(), px.begin(), px.end());
    }
    const auto pred = argmax_rows(model.forward(constant, Tensor({n, 1, p, p}, std::move(batch))));
    for (int c : pred) out.push_back(static_cast<Category>(c));
  }
  return out;
}

std::vector<std::vector<Category>> predict_images(const Model& model, const WeightSet& weights,
                                                  std::span<const FullImage> images,
                                                  const PatchParams& params) {
  std::vector<std::vector<Category>> out;
  out.reserve(images.size());
  for (const FullImage& image : images) {
    out.push_back(predict_patches(model, weights, extract_patches(image, params)));
  }
  return out;
}

EvalReport score_predictions(const std::vector<std::vector<Category>>& predictions,
                             std::span<const FullImage> images, double epsilon,
                             const std::string& method) {
  if (images.empty()) throw DataError("evaluate: no test images");
  if (predictions.size() != images.size()) {
    throw DataError("evaluate: prediction count does not match image count");
  }
  EvalReport report;
  report.method = method;
  report.epsilon = epsilon;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const VoteResult v = vote(predictions[i], epsilon);
    if (v.no_evidence) ++report.no_evidence;
    report.counts.add(images[i].label, v.decision);
  }
  const Confusion& c = report.counts;
  report.scores = metrics(c.tp, c.fn, c.tn, c.fp);
  return report;
}

EvalReport evaluate_full_images(const Model& model, const WeightSet& weights,
                                std::span<const FullImage> images, double epsilon,
                                const PatchParams& params, const std::string& method) {
  if (images.empty()) throw DataError("evaluate: no test images");
  return score_predictions(predict_images(model, weights, images, params), images, epsilon, method);
}

std::vector<EvalReport> sweep_threshold(const Model& model, const WeightSet& weights,
                                        std::span<const FullImage> images,
                                        std::span<const double> epsilons,
                                        const PatchParams& params) {
  if (images.empty()) throw DataError("evaluate: no test images");
  const auto predictions = predict_images(model, weights, images, params);
  std::vector<EvalReport> out;
  out.reserve(epsilons.size());
  for (double eps : epsilons) out.push_back(score_predictions(predictions, images, eps));
  return out;
}

}  // namespace softdistill
