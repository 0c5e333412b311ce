// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <bit>
#include <numeric>
#include <string>

#include "softdistill/errors.hpp"
#include "softdistill/model.hpp"
#include "suites.hpp"
#include "support.hpp"

using namespace softdistill;
using support::max_gradient_error;
using support::random_tensor;
using support::weighted_sum;

namespace {

// Direct convolution, used as an independent oracle.
std::vector<double> naive_conv(const Tensor& x, const Tensor& w, std::size_t stride, std::size_t pad) {
  const auto& xs = x.shape();
  const auto& ws = w.shape();
  const std::size_t n = xs[0], c = xs[1], h = xs[2], wd = xs[3];
  const std::size_t o = ws[0], kh = ws[2], kw = ws[3];
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> out(n * o * oh * ow, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t oc = 0; oc < o; ++oc)
      for (std::size_t r = 0; r < oh; ++r)
        for (std::size_t q = 0; q < ow; ++q) {
          double acc = 0.0;
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long y = static_cast<long>(r * stride + i) - static_cast<long>(pad);
                const long z = static_cast<long>(q * stride + j) - static_cast<long>(pad);
                if (y < 0 || z < 0 || y >= static_cast<long>(h) || z >= static_cast<long>(wd)) continue;
                acc += x[((b * c + ic) * h + static_cast<std::size_t>(y)) * wd + static_cast<std::size_t>(z)] *
                       w[((oc * c + ic) * kh + i) * kw + j];
              }
          out[((b * o + oc) * oh + r) * ow + q] = acc;
        }
  return out;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("forward examples") {
  CHECK(add(Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4})).data()[0] == 4.0);
  CHECK(add(Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4})).data()[1] == 6.0);

  const Tensor z = matmul(Tensor::zeros({2, 3}), Tensor::from({3, 2}, {1, -2, 3, 4.5, 5, 6}));
  CHECK(z.shape() == Shape{2, 2});
  for (double v : z.data()) CHECK(v == 0.0);

  std::mt19937_64 rng(3);
  const Tensor x = random_tensor(rng, {1, 1, 5, 5});
  const Tensor w = random_tensor(rng, {1, 1, 3, 3});
  const Tensor y = conv2d(x, w);
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  const auto ref = naive_conv(x, w, 1, 0);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-14));
}

TEST_CASE("conv2d matches nested loops across strides, padding and channels") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> small(1, 3), side(3, 8), k(1, 3), st(1, 2), pd(0, 1);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t kh = k(rng), kw = k(rng);
    const Tensor x = random_tensor(rng, {small(rng), small(rng), side(rng) + 2, side(rng) + 2});
    const Tensor w = random_tensor(rng, {small(rng), x.shape()[1], kh, kw});
    const std::size_t s = st(rng), p = pd(rng);
    const Tensor y = conv2d(x, w, s, p);
    const auto ref = naive_conv(x, w, s, p);
    REQUIRE(y.size() == ref.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(y[i] - ref[i]));
    CHECK(worst < 1e-13);
  }
}

TEST_CASE("gradient examples") {
  Graph g;
  const Tensor x = g.variable(Tensor::from({3}, {1, 2, 3}));
  const auto gx = grad(sum(mul(x, x)), std::vector<Tensor>{x});
  CHECK(gx[0][0] == 2.0);
  CHECK(gx[0][1] == 4.0);
  CHECK(gx[0][2] == 6.0);
  CHECK_FALSE(gx[0].requires_grad());

  Graph h;
  const Tensor theta = h.variable(Tensor::scalar(1.7));
  const Tensor first = grad(mul(theta, theta), std::vector<Tensor>{theta}, true)[0];
  CHECK(first.item() == doctest::Approx(3.4));
  CHECK(first.requires_grad());
  const Tensor second = grad(first, std::vector<Tensor>{theta})[0];
  CHECK(second.item() == 2.0);
}

TEST_CASE("first-order gradients match central differences for every op") {
  std::size_t cases = 0;
  double worst = 0.0;
  suites::first_order(2024, [&](const std::string& name, double err) {
    INFO(name);
    CHECK(err <= 1e-6);
    worst = std::max(worst, err);
    ++cases;
  });
  MESSAGE("finite-difference cases: " << cases << ", worst relative error " << worst);
  CHECK(cases >= 100);
}

TEST_CASE("three-layer MLP loss gradient matches central differences") {
  ModelConfig cfg;
  cfg.arch = Arch::kMlp;
  cfg.height = cfg.width = 3;
  cfg.hidden = {6, 5};
  cfg.classes = 3;
  const Model model(cfg);
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    // Random biases too: zero biases can put a pre-activation exactly on the
    // relu kink, where central differences are meaningless.
    std::vector<Tensor> values;
    for (const auto& p : model.init_weights(seed)) values.push_back(random_tensor(rng, p.value.shape()));
    const WeightSet w0 = model.init_weights(seed).with_values(values);
    const Tensor images = random_tensor(rng, {4, 1, 3, 3});
    const Targets targets = Targets::hard({0, 2, 1, 2});
    const double err = max_gradient_error(
        [&](const std::vector<Tensor>& theta) {
          return model.loss(images, targets, w0.with_values(theta));
        },
        w0.tensors());
    CHECK(err <= 1e-6);
  }
}

TEST_CASE("gradient through a gradient step matches finite differences") {
  // f(p) = outer(p - a * grad inner(p)) over the weights of a small MLP.
  ModelConfig cfg;
  cfg.arch = Arch::kMlp;
  cfg.height = cfg.width = 2;
  cfg.hidden = {4};
  const Model model(cfg);
  std::mt19937_64 rng(8);
  const double a = 0.3;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const WeightSet w0 = model.init_weights(seed + 100);
    const Tensor xa = random_tensor(rng, {3, 1, 2, 2}), xb = random_tensor(rng, {5, 1, 2, 2});
    const Targets ya = Targets::hard({0, 1, 2}), yb = Targets::hard({2, 1, 0, 0, 1});
    const auto f = [&](const std::vector<Tensor>& p) {
      std::vector<Tensor> leaves = p;
      Graph local;
      const bool on_graph = p.front().requires_grad();
      if (!on_graph) {
        for (auto& t : leaves) t = local.variable(t);
      }
      const Tensor inner = model.loss(xa, ya, w0.with_values(leaves));
      const auto g = grad(inner, leaves, true);
      std::vector<Tensor> stepped;
      for (std::size_t i = 0; i < leaves.size(); ++i) stepped.push_back(sub(leaves[i], scale(g[i], a)));
      const Tensor out = model.loss(xb, yb, w0.with_values(stepped));
      return on_graph ? out : out.detach();
    };
    CHECK(max_gradient_error(f, w0.tensors(), 1e-5) <= 1e-4);
  }
}

TEST_CASE("Hessian entries match differences of the analytic gradient") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x0 = random_tensor(rng, {2, 3});
    const Tensor w = random_tensor(rng, {3, 2});
    auto loss_of = [&](const Tensor& x) { return sum(log_softmax(matmul(mul(x, x), w))); };
    auto gradient_at = [&](const Tensor& x) {
      Graph g;
      const Tensor v = g.variable(x);
      return grad(loss_of(v), std::vector<Tensor>{v})[0];
    };
    Graph g;
    const Tensor x = g.variable(x0);
    const Tensor gx = grad(loss_of(x), std::vector<Tensor>{x}, true)[0];
    for (std::size_t i = 0; i < x0.size(); ++i) {
      // Row i of the Hessian via d(grad_i)/dx.
      const Tensor gi = sum(mul(gx, support::with_entry(Tensor::zeros(x0.shape()), i, 1.0)));
      const Tensor row = grad(gi, std::vector<Tensor>{x})[0];
      for (std::size_t j = 0; j < x0.size(); ++j) {
        const double h = 1e-5;
        const double fd = (gradient_at(support::with_entry(x0, j, x0[j] + h))[i] -
                           gradient_at(support::with_entry(x0, j, x0[j] - h))[i]) /
                          (2 * h);
        CHECK(support::rel_error(row[j], fd) <= 1e-4);
      }
    }
  }
}

TEST_CASE("gradients are linear in the loss") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor x0 = random_tensor(rng, {3, 4}), w = random_tensor(rng, {4, 2});
    const double a = 1.7, b = -0.4;
    auto l1 = [&](const Tensor& x) { return sum(exp(scale(x, 0.5))); };
    auto l2 = [&](const Tensor& x) { return mean(softmax(matmul(x, w))); };
    Graph g;
    const Tensor x = g.variable(x0);
    const std::vector<Tensor> xs{x};
    const Tensor combined = grad(add(scale(l1(x), a), scale(l2(x), b)), xs)[0];
    const Tensor g1 = grad(l1(x), xs)[0];
    const Tensor g2 = grad(l2(x), xs)[0];
    for (std::size_t i = 0; i < x0.size(); ++i) {
      CHECK(combined[i] == doctest::Approx(a * g1[i] + b * g2[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("identical graphs give bit-identical gradients") {
  auto compute = [] {
    std::mt19937_64 rng(77);
    ModelConfig cfg;
    cfg.arch = Arch::kSmallConv;
    cfg.hidden = {2, 3};
    const Model model(cfg);
    const WeightSet w = model.init_weights(4);
    const Tensor images = random_tensor(rng, {3, 1, 8, 8});
    Graph g;
    std::vector<Tensor> leaves;
    for (const auto& p : w) leaves.push_back(g.variable(p.value));
    const Tensor loss = model.loss(images, Targets::hard({0, 1, 2}), w.with_values(leaves));
    return grad(loss, leaves);
  };
  const auto a = compute(), b = compute();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(bit_equal(a[i], b[i]));
}

TEST_CASE("node ids are topologically ordered") {
  Graph g;
  const Tensor a = g.variable(Tensor::from({2}, {1, 2}));
  const Tensor b = g.variable(Tensor::from({2}, {3, 4}));
  const Tensor c = mul(a, b);
  const Tensor d = sum(add(c, a));
  CHECK(c.node() > a.node());
  CHECK(c.node() > b.node());
  CHECK(d.node() > c.node());
  CHECK(g.node_count() >= 5);
}

TEST_CASE("constants stay off the graph") {
  const Tensor c = add(Tensor::from({2}, {1, 2}), Tensor::from({2}, {3, 4}));
  CHECK_FALSE(c.requires_grad());
  Graph g;
  const Tensor v = g.variable(Tensor::from({2}, {1, 1}));
  CHECK(add(v, c).requires_grad());
}

TEST_CASE("leaves the loss does not reach get zero gradients") {
  Graph g;
  const Tensor a = g.variable(Tensor::from({2}, {1, 2}));
  const Tensor b = g.variable(Tensor::from({3}, {1, 2, 3}));
  const auto grads = grad(sum(a), std::vector<Tensor>{a, b});
  CHECK(grads[1].shape() == Shape{3});
  for (double v : grads[1].data()) CHECK(v == 0.0);
}

TEST_CASE("errors") {
  Graph g;
  const Tensor a = g.variable(Tensor::from({2}, {1, 2}));
  SUBCASE("non-scalar loss") { CHECK_THROWS_AS(grad(a, std::vector<Tensor>{a}), GraphError); }
  SUBCASE("loss outside any graph") {
    CHECK_THROWS_AS(grad(Tensor::scalar(1.0), std::vector<Tensor>{a}), GraphError);
  }
  SUBCASE("mixing graphs") {
    Graph other;
    const Tensor b = other.variable(Tensor::from({2}, {1, 2}));
    CHECK_THROWS_AS(add(a, b), GraphError);
    CHECK_THROWS_AS(grad(sum(a), std::vector<Tensor>{b}), GraphError);
  }
  SUBCASE("dropped graph") {
    Tensor loss;
    Tensor leaf;
    {
      Graph temp;
      leaf = temp.variable(Tensor::scalar(2.0));
      loss = mul(leaf, leaf);
    }
    CHECK_THROWS_AS(grad(loss, std::vector<Tensor>{leaf}), GraphError);
  }
  SUBCASE("shape mismatch names the op and shapes") {
    try {
      (void)add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}));
      FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
      const std::string what = e.what();
      CHECK(what.find("add") != std::string::npos);
      CHECK(what.find("[2,3]") != std::string::npos);
      CHECK(what.find("[3,2]") != std::string::npos);
    }
    CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
    CHECK_THROWS_AS(conv2d(Tensor::zeros({1, 2, 5, 5}), Tensor::zeros({1, 1, 3, 3})), ShapeError);
  }
  SUBCASE("only rank-0 operands broadcast") {
    CHECK_NOTHROW(add(Tensor::scalar(1.0), Tensor::zeros({2, 2})));
    CHECK_THROWS_AS(add(Tensor::zeros({1}), Tensor::zeros({2, 2})), ShapeError);
  }
  SUBCASE("bad tensors") {
    CHECK_THROWS_AS(Tensor({2, 0}, {}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor::zeros({2}).item(), ShapeError);
  }
}
