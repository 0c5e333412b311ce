// SPDX-License-Identifier: Apache-2.0
//
// Whole-image decisions by patch voting, and sensitivity / specificity /
// harmonic-mean scoring of those decisions.
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softdistill/model.hpp"
#include "softdistill/patches.hpp"

namespace softdistill {

struct VoteResult {
  std::size_t num_positive = 0;
  std::size_t num_negative = 0;
  std::size_t num_irrelevant = 0;
  // num_positive / (num_positive + num_negative); empty when both are zero.
  std::optional<double> ratio;
  int decision = 0;
  // No N or P patch at all; decision defaults to 0.
  bool no_evidence = false;
};

/// decision = 1 iff ratio >= epsilon. Irrelevant patches never enter the
/// ratio; discarded marks are ignored. Throws ConfigError unless 0 <= epsilon <= 1.
VoteResult vote(std::span<const Category> labels, double epsilon);

struct Metrics {
  double sen = 0.0;
  double spe = 0.0;
  double hm = 0.0;
};

/// 2ab/(a+b), with 0 when a + b == 0.
double harmonic_mean(double a, double b);

/// Throws DataError when either population (TP+FN or TN+FP) is empty.
Metrics metrics(std::size_t tp, std::size_t fn, std::size_t tn, std::size_t fp);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;

  void add(ImageLabel truth, int decision);
  Confusion& operator+=(const Confusion& other);
  std::size_t positives() const { return tp + fn; }
  std::size_t negatives() const { return tn + fp; }
};

struct EvalReport {
  std::string method;
  double epsilon = 0.0;
  Confusion counts;
  Metrics scores;
  std::size_t no_evidence = 0;
};

/// Argmax class of every patch in the grid.
std::vector<Category> predict_patches(const Model& model, const WeightSet& weights,
                                      const PatchGrid& grid);

/// predict_patches for each image's full grid.
std::vector<std::vector<Category>> predict_images(const Model& model, const WeightSet& weights,
                                                  std::span<const FullImage> images,
                                                  const PatchParams& params);

/// Votes every image at epsilon and scores against the image labels.
EvalReport score_predictions(const std::vector<std::vector<Category>>& predictions,
                             std::span<const FullImage> images, double epsilon,
                             const std::string& method = {});

EvalReport evaluate_full_images(const Model& model, const WeightSet& weights,
                                std::span<const FullImage> images, double epsilon,
                                const PatchParams& params, const std::string& method = {});

/// One report per epsilon, sharing one set of patch predictions.
std::vector<EvalReport> sweep_threshold(const Model& model, const WeightSet& weights,
                                        std::span<const FullImage> images,
                                        std::span<const double> epsilons,
                                        const PatchParams& params);

}  // namespace softdistill
