// SPDX-License-Identifier: Apache-2.0
//
// Helpers shared by the test binaries: random tensors and finite differences.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "softdistill/tensor.hpp"

namespace support {

using softdistill::Graph;
using softdistill::Shape;
using softdistill::Tensor;

/// |a - b| / max(|a|, |b|, floor). The floor keeps near-zero components from
/// turning rounding noise into huge relative errors.
inline double rel_error(double a, double b, double floor = 1e-3) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(softdistill::numel(shape));
  for (double& x : v) x = u(rng);
  return Tensor(std::move(shape), std::move(v));
}

/// Values whose magnitude is at least `gap`, with random sign; keeps relu and
/// friends away from their kinks.
inline Tensor random_away_from_zero(std::mt19937_64& rng, Shape shape, double gap = 0.05) {
  std::uniform_real_distribution<double> u(gap, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> v(softdistill::numel(shape));
  for (double& x : v) x = sign(rng) ? u(rng) : -u(rng);
  return Tensor(std::move(shape), std::move(v));
}

inline Tensor with_entry(const Tensor& t, std::size_t i, double value) {
  std::vector<double> v(t.data().begin(), t.data().end());
  v[i] = value;
  return Tensor(t.shape(), std::move(v));
}

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Largest rel_error between reverse-mode gradients and central differences
/// over every entry of every input.
inline double max_gradient_error(const ScalarFn& f, const std::vector<Tensor>& inputs,
                                 double h = 1e-5, double floor = 1e-3) {
  Graph graph;
  std::vector<Tensor> leaves;
  for (const Tensor& x : inputs) leaves.push_back(graph.variable(x));
  const std::vector<Tensor> grads = softdistill::grad(f(leaves), leaves);

  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      std::vector<Tensor> plus = inputs, minus = inputs;
      plus[k] = with_entry(inputs[k], i, inputs[k][i] + h);
      minus[k] = with_entry(inputs[k], i, inputs[k][i] - h);
      const double fd = (f(plus).item() - f(minus).item()) / (2.0 * h);
      worst = std::max(worst, rel_error(grads[k][i], fd, floor));
    }
  }
  return worst;
}

/// Same check for functions that record onto the graph holding their inputs,
/// e.g. ones that take inner gradients. Constant inputs get a scratch graph.
using GraphFn = std::function<Tensor(Graph&, const std::vector<Tensor>&)>;

inline double max_gradient_error_on_graph(const GraphFn& f, const std::vector<Tensor>& inputs,
                                          double h = 1e-5, double floor = 1e-3) {
  Graph graph;
  std::vector<Tensor> leaves;
  for (const Tensor& x : inputs) leaves.push_back(graph.variable(x));
  const std::vector<Tensor> grads = softdistill::grad(f(graph, leaves), leaves);

  const auto value = [&](const std::vector<Tensor>& v) {
    Graph scratch;
    return f(scratch, v).item();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      std::vector<Tensor> plus = inputs, minus = inputs;
      plus[k] = with_entry(inputs[k], i, inputs[k][i] + h);
      minus[k] = with_entry(inputs[k], i, inputs[k][i] - h);
      const double fd = (value(plus) - value(minus)) / (2.0 * h);
      worst = std::max(worst, rel_error(grads[k][i], fd, floor));
    }
  }
  return worst;
}

/// sum(out * w) for a fixed random w, turning any op output into a scalar
/// whose gradient exercises every output entry.
inline Tensor weighted_sum(const Tensor& out, const Tensor& w) {
  return softdistill::sum(softdistill::mul(out, w));
}

}  // namespace support
