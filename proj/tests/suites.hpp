// SPDX-License-Identifier: Apache-2.0
//
// Randomized finite-difference suites shared by the unit tests and the
// acceptance run.
#pragma once

#include <algorithm>
#include <functional>
#include <random>
#include <string>

#include "softdistill/distill.hpp"
#include "support.hpp"

namespace suites {

using namespace softdistill;
using support::random_tensor;
using support::weighted_sum;

using CaseSink = std::function<void(const std::string& name, double rel_error)>;

inline Shape random_shape(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> rank(1, 3), dim(1, 4);
  Shape s(rank(rng));
  for (auto& d : s) d = dim(rng);
  return s;
}

// Distinct values on a 0.01 grid, shuffled, so pooling never sees ties.
inline Tensor distinct_values(std::mt19937_64& rng, Shape shape) {
  std::vector<double> v(numel(shape));
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = -1.0 + 0.01 * static_cast<double>(i);
  std::shuffle(v.begin(), v.end(), rng);
  return Tensor(std::move(shape), std::move(v));
}

/// Every op, several random shapes each: 160 cases.
inline void first_order(std::uint64_t seed, const CaseSink& sink) {
  std::mt19937_64 rng(seed);
  auto run = [&](const char* name, const support::ScalarFn& f, const std::vector<Tensor>& in) {
    sink(name, support::max_gradient_error(f, in));
  };

  for (int t = 0; t < 8; ++t) {
    const Shape s = random_shape(rng);
    const Tensor w = random_tensor(rng, s);
    run("add", [&](const auto& v) { return weighted_sum(add(v[0], v[1]), w); },
        {random_tensor(rng, s), random_tensor(rng, s)});
    run("sub", [&](const auto& v) { return weighted_sum(sub(v[0], v[1]), w); },
        {random_tensor(rng, s), random_tensor(rng, s)});
    run("mul", [&](const auto& v) { return weighted_sum(mul(v[0], v[1]), w); },
        {random_tensor(rng, s), random_tensor(rng, s)});
    run("div", [&](const auto& v) { return weighted_sum(div(v[0], v[1]), w); },
        {random_tensor(rng, s), random_tensor(rng, s, 0.5, 1.5)});
    run("scalar broadcast", [&](const auto& v) { return weighted_sum(mul(v[0], add(v[1], v[0])), w); },
        {random_tensor(rng, {}), random_tensor(rng, s)});
    run("scalar-mul", [&](const auto& v) { return weighted_sum(scale(v[0], -2.5), w); },
        {random_tensor(rng, s)});
    run("relu", [&](const auto& v) { return weighted_sum(relu(v[0]), w); },
        {support::random_away_from_zero(rng, s)});
    run("exp", [&](const auto& v) { return weighted_sum(exp(v[0]), w); }, {random_tensor(rng, s)});
    run("log", [&](const auto& v) { return weighted_sum(log(v[0]), w); },
        {random_tensor(rng, s, 0.3, 2.0)});
    run("sum", [&](const auto& v) { return mul(sum(v[0]), sum(v[0])); }, {random_tensor(rng, s)});
    run("mean", [&](const auto& v) { return exp(mean(v[0])); }, {random_tensor(rng, s)});
    run("reshape", [&](const auto& v) {
          return weighted_sum(reshape(v[0], {numel(s)}), reshape(w, {numel(s)}));
        },
        {random_tensor(rng, s)});
  }
  std::uniform_int_distribution<std::size_t> dim(1, 5);
  for (int t = 0; t < 8; ++t) {
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    const Tensor w = random_tensor(rng, {m, n});
    run("matmul", [&](const auto& v) { return weighted_sum(matmul(v[0], v[1]), w); },
        {random_tensor(rng, {m, k}), random_tensor(rng, {k, n})});
    const Tensor wt = random_tensor(rng, {n, m});
    run("transpose", [&](const auto& v) { return weighted_sum(transpose(v[0]), wt); },
        {random_tensor(rng, {m, n})});
    const Tensor w2 = random_tensor(rng, {m, n});
    run("softmax", [&](const auto& v) { return weighted_sum(softmax(v[0]), w2); },
        {random_tensor(rng, {m, n}, -3.0, 3.0)});
    run("log_softmax", [&](const auto& v) { return weighted_sum(log_softmax(v[0]), w2); },
        {random_tensor(rng, {m, n}, -3.0, 3.0)});
  }
  std::uniform_int_distribution<std::size_t> small(1, 2), side(4, 7), kk(1, 3), st(1, 2), pd(0, 1);
  for (int t = 0; t < 8; ++t) {
    const Shape xs{small(rng), small(rng), side(rng), side(rng)};
    const Shape ws{small(rng), xs[1], kk(rng), kk(rng)};
    const std::size_t s = st(rng), p = pd(rng);
    const Tensor y0 = conv2d(Tensor::zeros(xs), Tensor::zeros(ws), s, p);
    const Tensor w = random_tensor(rng, y0.shape());
    run("conv2d", [&](const auto& v) { return weighted_sum(conv2d(v[0], v[1], s, p), w); },
        {random_tensor(rng, xs), random_tensor(rng, ws)});
    const Tensor wx = random_tensor(rng, xs);
    run("conv2d input adjoint",
        [&](const auto& v) { return weighted_sum(conv2d_input_grad(v[0], v[1], xs, s, p), wx); },
        {random_tensor(rng, y0.shape()), random_tensor(rng, ws)});
    const Tensor ww = random_tensor(rng, ws);
    run("conv2d weight adjoint",
        [&](const auto& v) { return weighted_sum(conv2d_weight_grad(v[0], v[1], ws, s, p), ww); },
        {random_tensor(rng, xs), random_tensor(rng, y0.shape())});

    const Shape ps{small(rng), small(rng), side(rng), side(rng)};
    const std::size_t window = kk(rng) + 1, pstride = st(rng);
    const Tensor pooled = max_pool2d(Tensor::zeros(ps), window, pstride);
    const Tensor wp = random_tensor(rng, pooled.shape());
    run("max_pool2d", [&](const auto& v) { return weighted_sum(max_pool2d(v[0], window, pstride), wp); },
        {distinct_values(rng, ps)});
  }
}

/// Outer loss after one inner step, differentiated with respect to the
/// distilled images, label parameters and inner rate; per_arch cases for each
/// of the linear and MLP models.
inline void bilevel(std::uint64_t seed, int per_arch, const CaseSink& sink) {
  std::mt19937_64 rng(seed);
  for (Arch arch : {Arch::kLinear, Arch::kMlp}) {
    ModelConfig cfg;
    cfg.arch = arch;
    cfg.height = 2;
    cfg.width = 3;
    cfg.hidden = {4, 3};
    const Model model(cfg);
    for (int trial = 0; trial < per_arch; ++trial) {
      std::vector<Tensor> values;
      for (const auto& p : model.init_weights(0)) values.push_back(random_tensor(rng, p.value.shape()));
      const WeightSet theta0 = model.init_weights(0).with_values(values);
      const Tensor real_x = random_tensor(rng, {5, 1, 2, 3});
      const std::vector<int> real_y{0, 1, 2, 1, 0};
      const std::vector<Tensor> inputs{
          random_tensor(rng, {3, 1, 2, 3}), random_tensor(rng, {3, 3}),
          Tensor::scalar(std::uniform_real_distribution<double>(0.05, 0.5)(rng))};
      const auto objective = [&](Graph& graph, const std::vector<Tensor>& v) {
        const WeightSet next = inner_update(graph, model, theta0, v[0], Targets::soft(v[1]), v[2]);
        return outer_loss(model, real_x, real_y, next);
      };
      sink(to_string(arch), support::max_gradient_error_on_graph(objective, inputs));
    }
  }
}

struct ClosedForm {
  double theta1, loss, grad_image, grad_lr, next_image, next_lr;
};

/// inner 0.5 (theta - x~)^2 from theta0 = 0 with rate 0.5 and x~ = 1, outer
/// 0.5 (theta - 2)^2, one descent step at rate 0.1. Exact answers: 0.5, 1.125,
/// -0.75, -1.5, 1.075, 0.65.
inline ClosedForm closed_form_bilevel() {
  ClosedForm out{};
  Graph graph;
  const Tensor x = graph.variable(Tensor::scalar(1.0));
  const Tensor lr = graph.variable(Tensor::scalar(0.5));
  const auto inner = [](const Tensor& theta, const Tensor& image) {
    const Tensor d = sub(theta, image);
    return scale(mul(d, d), 0.5);
  };
  const auto outer = [](const Tensor& theta) {
    const Tensor d = sub(theta, Tensor::scalar(2.0));
    return scale(mul(d, d), 0.5);
  };
  const auto theta1 = gradient_step(
      graph, {Tensor::scalar(0.0)}, [&](const std::vector<Tensor>& t) { return inner(t[0], x); }, lr);
  const Tensor loss = outer(theta1[0]);
  const auto g = grad(loss, std::vector<Tensor>{x, lr});
  out.theta1 = theta1[0].item();
  out.loss = loss.item();
  out.grad_image = g[0].item();
  out.grad_lr = g[1].item();

  BilevelObjective obj;
  obj.inner = [&](const std::vector<Tensor>& t, const Tensor& images, const Tensor&) {
    return inner(t[0], reshape(images, {}));
  };
  obj.outer = [&](const std::vector<Tensor>& t) { return outer(t[0]); };
  DistilledSet d;
  d.images = Tensor({1, 1, 1, 1}, {1.0});
  d.label_params = Tensor::zeros({1, 2});
  d.inner_lr = 0.5;
  DistillConfig cfg;
  cfg.epochs = 1;
  cfg.steps = 1;
  cfg.outer_lr = 0.1;
  const DistilledSet next = distill_step(obj, d, {Tensor::scalar(0.0)}, cfg);
  out.next_image = next.images[0];
  out.next_lr = next.inner_lr;
  return out;
}

}  // namespace suites
