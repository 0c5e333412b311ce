// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "softdistill/errors.hpp"
#include "softdistill/kernels.hpp"
#include "tape.hpp"

namespace softdistill {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kLeaf: return "leaf";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kScalarMul: return "scalar-mul";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kConv2dInputGrad: return "conv2d-input-grad";
    case OpKind::kConv2dWeightGrad: return "conv2d-weight-grad";
    case OpKind::kRelu: return "relu";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLogSoftmax: return "log-softmax";
    case OpKind::kReshape: return "reshape";
    case OpKind::kMaxPool2d: return "max-pool";
    case OpKind::kMaxPoolScatter: return "max-pool-scatter";
  }
  return "unknown";
}

namespace {

struct Forward {
  Shape shape;
  std::vector<double> data;
};

[[noreturn]] void shape_error(OpKind kind, std::span<const Tensor> in, const std::string& why) {
  std::string msg = std::string(op_name(kind)) + ": " + why + " (operand shapes";
  for (const Tensor& t : in) msg += " " + to_string(t.shape());
  msg += ")";
  throw ShapeError(msg);
}

void expect_arity(OpKind kind, std::span<const Tensor> in, std::size_t n) {
  if (in.size() != n) {
    shape_error(kind, in, "expected " + std::to_string(n) + " operands, got " +
                              std::to_string(in.size()));
  }
}

void expect_rank(OpKind kind, std::span<const Tensor> in, std::size_t which, std::size_t rank) {
  if (in[which].rank() != rank) {
    shape_error(kind, in, "operand " + std::to_string(which) + " must have rank " +
                              std::to_string(rank));
  }
}

using BinaryKernel = void (*)(std::span<const double>, std::span<const double>, std::span<double>);

template <typename ScalarOp>
Forward elementwise(OpKind kind, std::span<const Tensor> in, BinaryKernel kernel, ScalarOp op) {
  expect_arity(kind, in, 2);
  const Tensor& a = in[0];
  const Tensor& b = in[1];
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.size());
    kernel(a.data(), b.data(), out);
    return {a.shape(), std::move(out)};
  }
  if (a.rank() == 0) {
    const double s = a[0];
    std::vector<double> out(b.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(s, b[i]);
    return {b.shape(), std::move(out)};
  }
  if (b.rank() == 0) {
    const double s = b[0];
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = op(a[i], s);
    return {a.shape(), std::move(out)};
  }
  shape_error(kind, in, "shapes must match or one operand must be rank-0");
}

struct ConvGeometry {
  std::size_t batch, in_ch, height, width;
  std::size_t out_ch, kh, kw;
  std::size_t out_h, out_w;
  std::size_t stride, padding;

  std::size_t patch() const { return in_ch * kh * kw; }
  std::size_t out_plane() const { return out_h * out_w; }
  Shape input_shape() const { return {batch, in_ch, height, width}; }
  Shape weight_shape() const { return {out_ch, in_ch, kh, kw}; }
  Shape output_shape() const { return {batch, out_ch, out_h, out_w}; }
};

ConvGeometry conv_geometry(OpKind kind, std::span<const Tensor> in, const Shape& input,
                           const Shape& weight, std::size_t stride, std::size_t padding) {
  if (input.size() != 4 || weight.size() != 4) {
    shape_error(kind, in, "input and weight must be rank-4 (NCHW / OCKK)");
  }
  if (input[1] != weight[1]) shape_error(kind, in, "input channels differ from weight channels");
  if (stride == 0) shape_error(kind, in, "stride must be positive");
  if (input[2] + 2 * padding < weight[2] || input[3] + 2 * padding < weight[3]) {
    shape_error(kind, in, "kernel larger than padded input");
  }
  ConvGeometry g{};
  g.batch = input[0];
  g.in_ch = input[1];
  g.height = input[2];
  g.width = input[3];
  g.out_ch = weight[0];
  g.kh = weight[2];
  g.kw = weight[3];
  g.stride = stride;
  g.padding = padding;
  g.out_h = (g.height + 2 * padding - g.kh) / stride + 1;
  g.out_w = (g.width + 2 * padding - g.kw) / stride + 1;
  return g;
}

// cols is (C*KH*KW) x (OH*OW)
void im2col(const ConvGeometry& g, const double* image, double* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.out_plane();
        for (std::size_t oi = 0; oi < g.out_h; ++oi) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - pad;
          for (std::size_t oj = 0; oj < g.out_w; ++oj) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - pad;
            const bool inside = y >= 0 && x >= 0 && y < static_cast<std::ptrdiff_t>(g.height) &&
                                x < static_cast<std::ptrdiff_t>(g.width);
            row[oi * g.out_w + oj] =
                inside ? image[(c * g.height + static_cast<std::size_t>(y)) * g.width +
                               static_cast<std::size_t>(x)]
                       : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* cols, double* image) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < g.in_ch; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = cols + ((c * g.kh + ki) * g.kw + kj) * g.out_plane();
        for (std::size_t oi = 0; oi < g.out_h; ++oi) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - pad;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t oj = 0; oj < g.out_w; ++oj) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - pad;
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width)) continue;
            image[(c * g.height + static_cast<std::size_t>(y)) * g.width +
                  static_cast<std::size_t>(x)] += row[oi * g.out_w + oj];
          }
        }
      }
    }
  }
}

std::vector<double> transposed(std::span<const double> m, std::size_t rows, std::size_t cols) {
  std::vector<double> t(m.size());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = m[i * cols + j];
  }
  return t;
}

Forward conv_forward(const ConvGeometry& g, std::span<const double> input,
                     std::span<const double> weight) {
  const auto& k = kernels::active();
  std::vector<double> out(g.batch * g.out_ch * g.out_plane());
  std::vector<double> cols(g.patch() * g.out_plane());
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, input.data() + n * g.in_ch * g.height * g.width, cols.data());
    k.gemm(g.out_ch, g.out_plane(), g.patch(), weight, cols,
           std::span<double>(out).subspan(n * g.out_ch * g.out_plane(), g.out_ch * g.out_plane()));
  }
  return {g.output_shape(), std::move(out)};
}

Forward conv_input_grad_forward(const ConvGeometry& g, std::span<const double> grad_out,
                                std::span<const double> weight) {
  const auto& k = kernels::active();
  const std::vector<double> wt = transposed(weight, g.out_ch, g.patch());
  std::vector<double> out(g.batch * g.in_ch * g.height * g.width, 0.0);
  std::vector<double> cols(g.patch() * g.out_plane());
  for (std::size_t n = 0; n < g.batch; ++n) {
    k.gemm(g.patch(), g.out_plane(), g.out_ch, wt,
           grad_out.subspan(n * g.out_ch * g.out_plane(), g.out_ch * g.out_plane()), cols);
    col2im_add(g, cols.data(), out.data() + n * g.in_ch * g.height * g.width);
  }
  return {g.input_shape(), std::move(out)};
}

Forward conv_weight_grad_forward(const ConvGeometry& g, std::span<const double> input,
                                 std::span<const double> grad_out) {
  const auto& k = kernels::active();
  std::vector<double> out(g.out_ch * g.patch(), 0.0);
  std::vector<double> cols(g.patch() * g.out_plane());
  std::vector<double> partial(out.size());
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, input.data() + n * g.in_ch * g.height * g.width, cols.data());
    const std::vector<double> cols_t = transposed(cols, g.patch(), g.out_plane());
    k.gemm(g.out_ch, g.patch(), g.out_plane(),
           grad_out.subspan(n * g.out_ch * g.out_plane(), g.out_ch * g.out_plane()), cols_t,
           partial);
    k.add(out, partial, out);
  }
  return {g.weight_shape(), std::move(out)};
}

Forward pool_forward(OpKind kind, std::span<const Tensor> in, OpAttrs& attrs) {
  expect_arity(kind, in, 1);
  expect_rank(kind, in, 0, 4);
  const Shape& s = in[0].shape();
  if (attrs.window == 0 || attrs.stride == 0) shape_error(kind, in, "window and stride must be positive");
  if (s[2] < attrs.window || s[3] < attrs.window) shape_error(kind, in, "window larger than input");
  const std::size_t oh = (s[2] - attrs.window) / attrs.stride + 1;
  const std::size_t ow = (s[3] - attrs.window) / attrs.stride + 1;
  const Shape out_shape{s[0], s[1], oh, ow};
  const std::size_t n_out = numel(out_shape);
  std::span<const double> x = in[0].data();

  if (attrs.index.empty()) {
    attrs.index.resize(n_out);
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < s[0] * s[1]; ++plane) {
      const std::size_t base = plane * s[2] * s[3];
      for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
          std::size_t best = base + (i * attrs.stride) * s[3] + j * attrs.stride;
          for (std::size_t di = 0; di < attrs.window; ++di) {
            for (std::size_t dj = 0; dj < attrs.window; ++dj) {
              const std::size_t at = base + (i * attrs.stride + di) * s[3] + j * attrs.stride + dj;
              if (x[at] > x[best]) best = at;
            }
          }
          attrs.index[o++] = best;
        }
      }
    }
  } else if (attrs.index.size() != n_out) {
    shape_error(kind, in, "pooling index does not match output size");
  }
  std::vector<double> out(n_out);
  for (std::size_t o = 0; o < n_out; ++o) out[o] = x[attrs.index[o]];
  attrs.shape = s;
  return {out_shape, std::move(out)};
}

void row_stable_softmax(std::span<const double> x, std::size_t rows, std::size_t cols,
                        std::span<double> out, bool take_log) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = out.data() + r * cols;
    std::size_t top = 0;
    for (std::size_t c = 1; c < cols; ++c) {
      if (xr[c] > xr[top]) top = c;
    }
    const double mx = xr[top];
    // z = 1 + rest; log1p keeps tiny tails that 1 + rest would round away.
    double rest = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      if (c != top) rest += std::exp(xr[c] - mx);
    }
    const double z = 1.0 + rest;
    if (take_log) {
      const double lz = std::log1p(rest);
      for (std::size_t c = 0; c < cols; ++c) yr[c] = xr[c] - mx - lz;
    } else {
      for (std::size_t c = 0; c < cols; ++c) yr[c] = std::exp(xr[c] - mx) / z;
    }
  }
}

Forward compute(OpKind kind, std::span<const Tensor> in, OpAttrs& attrs) {
  const auto& k = kernels::active();
  switch (kind) {
    case OpKind::kLeaf:
      throw GraphError("record: leaves are created with Graph::variable");
    case OpKind::kAdd:
      return elementwise(kind, in, k.add, [](double a, double b) { return a + b; });
    case OpKind::kSub:
      return elementwise(kind, in, k.sub, [](double a, double b) { return a - b; });
    case OpKind::kMul:
      return elementwise(kind, in, k.mul, [](double a, double b) { return a * b; });
    case OpKind::kDiv:
      return elementwise(kind, in, k.div, [](double a, double b) { return a / b; });
    case OpKind::kScalarMul: {
      expect_arity(kind, in, 1);
      std::vector<double> out(in[0].size());
      k.scale(in[0].data(), attrs.scalar, out);
      return {in[0].shape(), std::move(out)};
    }
    case OpKind::kMatMul: {
      expect_arity(kind, in, 2);
      expect_rank(kind, in, 0, 2);
      expect_rank(kind, in, 1, 2);
      const std::size_t m = in[0].shape()[0], inner = in[0].shape()[1], n = in[1].shape()[1];
      if (in[1].shape()[0] != inner) shape_error(kind, in, "inner dimensions differ");
      std::vector<double> out(m * n);
      k.gemm(m, n, inner, in[0].data(), in[1].data(), out);
      return {{m, n}, std::move(out)};
    }
    case OpKind::kTranspose: {
      expect_arity(kind, in, 1);
      expect_rank(kind, in, 0, 2);
      const std::size_t r = in[0].shape()[0], c = in[0].shape()[1];
      return {{c, r}, transposed(in[0].data(), r, c)};
    }
    case OpKind::kConv2d: {
      expect_arity(kind, in, 2);
      const ConvGeometry g =
          conv_geometry(kind, in, in[0].shape(), in[1].shape(), attrs.stride, attrs.padding);
      return conv_forward(g, in[0].data(), in[1].data());
    }
    case OpKind::kConv2dInputGrad: {
      expect_arity(kind, in, 2);
      const ConvGeometry g =
          conv_geometry(kind, in, attrs.shape, in[1].shape(), attrs.stride, attrs.padding);
      if (in[0].shape() != g.output_shape()) {
        shape_error(kind, in, "upstream gradient must have conv output shape " +
                                  to_string(g.output_shape()));
      }
      return conv_input_grad_forward(g, in[0].data(), in[1].data());
    }
    case OpKind::kConv2dWeightGrad: {
      expect_arity(kind, in, 2);
      const ConvGeometry g =
          conv_geometry(kind, in, in[0].shape(), attrs.shape, attrs.stride, attrs.padding);
      if (in[1].shape() != g.output_shape()) {
        shape_error(kind, in, "upstream gradient must have conv output shape " +
                                  to_string(g.output_shape()));
      }
      return conv_weight_grad_forward(g, in[0].data(), in[1].data());
    }
    case OpKind::kRelu: {
      expect_arity(kind, in, 1);
      std::vector<double> out(in[0].size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[0][i] > 0.0 ? in[0][i] : 0.0;
      return {in[0].shape(), std::move(out)};
    }
    case OpKind::kExp: {
      expect_arity(kind, in, 1);
      std::vector<double> out(in[0].size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(in[0][i]);
      return {in[0].shape(), std::move(out)};
    }
    case OpKind::kLog: {
      expect_arity(kind, in, 1);
      std::vector<double> out(in[0].size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(in[0][i]);
      return {in[0].shape(), std::move(out)};
    }
    case OpKind::kSum: {
      expect_arity(kind, in, 1);
      return {{}, {k.sum(in[0].data())}};
    }
    case OpKind::kMean: {
      expect_arity(kind, in, 1);
      return {{}, {k.sum(in[0].data()) / static_cast<double>(in[0].size())}};
    }
    case OpKind::kSoftmax:
    case OpKind::kLogSoftmax: {
      expect_arity(kind, in, 1);
      expect_rank(kind, in, 0, 2);
      std::vector<double> out(in[0].size());
      row_stable_softmax(in[0].data(), in[0].shape()[0], in[0].shape()[1], out,
                         kind == OpKind::kLogSoftmax);
      return {in[0].shape(), std::move(out)};
    }
    case OpKind::kReshape: {
      expect_arity(kind, in, 1);
      if (numel(attrs.shape) != in[0].size()) {
        shape_error(kind, in, "cannot reshape to " + to_string(attrs.shape));
      }
      std::span<const double> d = in[0].data();
      return {attrs.shape, std::vector<double>(d.begin(), d.end())};
    }
    case OpKind::kMaxPool2d:
      return pool_forward(kind, in, attrs);
    case OpKind::kMaxPoolScatter: {
      expect_arity(kind, in, 1);
      if (attrs.index.size() != in[0].size()) {
        shape_error(kind, in, "pooling index does not match upstream gradient");
      }
      std::vector<double> out(numel(attrs.shape), 0.0);
      for (std::size_t o = 0; o < attrs.index.size(); ++o) {
        if (attrs.index[o] >= out.size()) shape_error(kind, in, "pooling index out of range");
        out[attrs.index[o]] += in[0][o];
      }
      return {attrs.shape, std::move(out)};
    }
  }
  throw GraphError("record: unknown op");
}

}  // namespace

Tensor record(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs) {
  std::shared_ptr<detail::Tape> tape;
  for (const Tensor& t : inputs) {
    if (!t.requires_grad()) continue;
    if (TensorAccess::has_expired_tape(t)) {
      throw GraphError(std::string(op_name(kind)) + ": operand belongs to a graph that was dropped");
    }
    auto mine = TensorAccess::tape(t);
    if (tape && tape != mine) {
      throw GraphError(std::string(op_name(kind)) + ": operands belong to different graphs");
    }
    tape = std::move(mine);
  }

  OpAttrs used = attrs;
  Forward fwd = compute(kind, inputs, used);
  Tensor out(std::move(fwd.shape), std::move(fwd.data));
  if (!tape) return out;

  const std::size_t id = tape->nodes.size();
  TensorAccess::attach(out, tape, id);
  detail::Node node;
  node.kind = kind;
  node.inputs.assign(inputs.begin(), inputs.end());
  node.attrs = std::move(used);
  node.output = out;
  tape->nodes.push_back(std::move(node));
  return out;
}

namespace {

Tensor unary(OpKind kind, const Tensor& a, const OpAttrs& attrs = {}) {
  const Tensor in[] = {a};
  return record(kind, in, attrs);
}

Tensor binary(OpKind kind, const Tensor& a, const Tensor& b, const OpAttrs& attrs = {}) {
  const Tensor in[] = {a, b};
  return record(kind, in, attrs);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(OpKind::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(OpKind::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(OpKind::kMul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary(OpKind::kDiv, a, b); }

Tensor scale(const Tensor& a, double c) {
  OpAttrs attrs;
  attrs.scalar = c;
  return unary(OpKind::kScalarMul, a, attrs);
}

Tensor matmul(const Tensor& a, const Tensor& b) { return binary(OpKind::kMatMul, a, b); }
Tensor transpose(const Tensor& a) { return unary(OpKind::kTranspose, a); }

Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride, std::size_t padding) {
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.padding = padding;
  return binary(OpKind::kConv2d, input, weight, attrs);
}

Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape,
                         std::size_t stride, std::size_t padding) {
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.padding = padding;
  attrs.shape = input_shape;
  return binary(OpKind::kConv2dInputGrad, grad_out, weight, attrs);
}

Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, const Shape& weight_shape,
                          std::size_t stride, std::size_t padding) {
  OpAttrs attrs;
  attrs.stride = stride;
  attrs.padding = padding;
  attrs.shape = weight_shape;
  return binary(OpKind::kConv2dWeightGrad, input, grad_out, attrs);
}

Tensor relu(const Tensor& a) { return unary(OpKind::kRelu, a); }
Tensor exp(const Tensor& a) { return unary(OpKind::kExp, a); }
Tensor log(const Tensor& a) { return unary(OpKind::kLog, a); }
Tensor sum(const Tensor& a) { return unary(OpKind::kSum, a); }
Tensor mean(const Tensor& a) { return unary(OpKind::kMean, a); }
Tensor softmax(const Tensor& a) { return unary(OpKind::kSoftmax, a); }
Tensor log_softmax(const Tensor& a) { return unary(OpKind::kLogSoftmax, a); }

Tensor reshape(const Tensor& a, Shape shape) {
  OpAttrs attrs;
  attrs.shape = std::move(shape);
  return unary(OpKind::kReshape, a, attrs);
}

Tensor max_pool2d(const Tensor& a, std::size_t window, std::size_t stride) {
  OpAttrs attrs;
  attrs.window = window;
  attrs.stride = stride;
  return unary(OpKind::kMaxPool2d, a, attrs);
}

}  // namespace softdistill
