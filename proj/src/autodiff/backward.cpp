// SPDX-License-Identifier: Apache-2.0
#include <optional>
#include <utility>

#include "softdistill/errors.hpp"
#include "tape.hpp"

namespace softdistill {
namespace {

// Sum a broadcast gradient back down to a rank-0 operand.
Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (target.empty() && g.rank() != 0) return sum(g);
  return g;
}

Tensor ones_like_shape(const Shape& shape) { return Tensor::full(shape, 1.0); }

// rows of (B x C) summed into (B x 1), then spread back over C columns.
Tensor row_sum_broadcast(const Tensor& t) {
  const std::size_t cols = t.shape()[1];
  const Tensor row_sums = matmul(t, ones_like_shape({cols, 1}));
  return matmul(row_sums, ones_like_shape({1, cols}));
}

using Grads = std::vector<std::optional<Tensor>>;

// Gradients of one node's inputs given the gradient of its output. Every
// formula is written with recordable ops so that, when the operands are graph
// tensors, the result is differentiable again.
Grads backward_rule(const detail::Node& node, const std::vector<Tensor>& in, const Tensor& out,
                    const Tensor& g, const std::vector<char>& want) {
  const OpAttrs& at = node.attrs;
  // Skip the expensive half of a binary rule when that operand needs nothing.
  const auto pick = [&](std::size_t k, auto&& make) -> std::optional<Tensor> {
    if (!want[k]) return std::nullopt;
    return make();
  };
  switch (node.kind) {
    case OpKind::kLeaf:
      return {};
    case OpKind::kAdd:
      return {reduce_to(g, in[0].shape()), reduce_to(g, in[1].shape())};
    case OpKind::kSub:
      return {reduce_to(g, in[0].shape()), reduce_to(scale(g, -1.0), in[1].shape())};
    case OpKind::kMul:
      return {pick(0, [&] { return reduce_to(mul(g, in[1]), in[0].shape()); }),
              pick(1, [&] { return reduce_to(mul(g, in[0]), in[1].shape()); })};
    case OpKind::kDiv: {
      const Tensor ga = div(g, in[1]);
      const Tensor gb = scale(div(mul(g, out), in[1]), -1.0);
      return {reduce_to(ga, in[0].shape()), reduce_to(gb, in[1].shape())};
    }
    case OpKind::kScalarMul:
      return {scale(g, at.scalar)};
    case OpKind::kMatMul:
      return {pick(0, [&] { return matmul(g, transpose(in[1])); }),
              pick(1, [&] { return matmul(transpose(in[0]), g); })};
    case OpKind::kTranspose:
      return {transpose(g)};
    case OpKind::kConv2d:
      return {pick(0, [&] { return conv2d_input_grad(g, in[1], in[0].shape(), at.stride, at.padding); }),
              pick(1, [&] { return conv2d_weight_grad(in[0], g, in[1].shape(), at.stride, at.padding); })};
    case OpKind::kConv2dInputGrad:
      // Linear in both operands; each adjoint is the other conv op.
      return {pick(0, [&] { return conv2d(g, in[1], at.stride, at.padding); }),
              pick(1, [&] { return conv2d_weight_grad(g, in[0], in[1].shape(), at.stride, at.padding); })};
    case OpKind::kConv2dWeightGrad:
      return {pick(0, [&] { return conv2d_input_grad(in[1], g, in[0].shape(), at.stride, at.padding); }),
              pick(1, [&] { return conv2d(in[0], g, at.stride, at.padding); })};
    case OpKind::kRelu: {
      std::vector<double> mask(in[0].size());
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = in[0][i] > 0.0 ? 1.0 : 0.0;
      return {mul(g, Tensor(in[0].shape(), std::move(mask)))};
    }
    case OpKind::kExp:
      return {mul(g, out)};
    case OpKind::kLog:
      return {div(g, in[0])};
    case OpKind::kSum:
      return {mul(g, ones_like_shape(in[0].shape()))};
    case OpKind::kMean:
      return {mul(g, Tensor::full(in[0].shape(), 1.0 / static_cast<double>(in[0].size())))};
    case OpKind::kSoftmax:
      return {mul(out, sub(g, row_sum_broadcast(mul(g, out))))};
    case OpKind::kLogSoftmax:
      return {sub(g, mul(exp(out), row_sum_broadcast(g)))};
    case OpKind::kReshape:
      return {reshape(g, in[0].shape())};
    case OpKind::kMaxPool2d: {
      OpAttrs scatter = at;
      scatter.shape = in[0].shape();
      const Tensor args[] = {g};
      return {record(OpKind::kMaxPoolScatter, args, scatter)};
    }
    case OpKind::kMaxPoolScatter: {
      OpAttrs gather = at;
      const Tensor args[] = {g};
      return {record(OpKind::kMaxPool2d, args, gather)};
    }
  }
  throw GraphError("grad: unknown op");
}

}  // namespace

std::vector<Tensor> grad(const Tensor& loss, std::span<const Tensor> leaves, bool create_graph) {
  if (loss.size() != 1 || loss.rank() != 0) {
    throw GraphError("grad: loss must be rank-0, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw GraphError("grad: loss is not connected to a recording graph");
  }
  auto tape = TensorAccess::tape(loss);
  if (!tape) throw GraphError("grad: the loss's graph was dropped");
  for (const Tensor& leaf : leaves) {
    if (leaf.requires_grad() && !leaf.same_graph(loss)) {
      throw GraphError("grad: leaf belongs to a different graph than the loss");
    }
  }

  const std::size_t last = loss.node();

  // Only nodes that lie on a path from some requested leaf need gradients.
  std::vector<char> needed(last + 1, 0);
  for (const Tensor& leaf : leaves) {
    if (leaf.requires_grad() && leaf.node() <= last) needed[leaf.node()] = 1;
  }
  for (std::size_t id = 0; id <= last; ++id) {
    if (needed[id]) continue;
    for (const Tensor& in : tape->nodes[id].inputs) {
      if (in.requires_grad() && needed[in.node()]) {
        needed[id] = 1;
        break;
      }
    }
  }

  Grads grads(last + 1);
  grads[last] = Tensor::scalar(1.0);

  for (std::size_t id = last + 1; id-- > 0;) {
    if (!grads[id] || !needed[id]) continue;
    // Copy: recording during create_graph may grow the node vector.
    const detail::Node node = tape->nodes[id];
    if (node.kind == OpKind::kLeaf) continue;

    std::vector<Tensor> inputs = node.inputs;
    Tensor output = node.output;
    Tensor upstream = *grads[id];
    if (!create_graph) {
      for (Tensor& t : inputs) t = t.detach();
      output = output.detach();
      upstream = upstream.detach();
    }
    std::vector<char> want(inputs.size(), 0);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      want[k] = node.inputs[k].requires_grad() && needed[node.inputs[k].node()];
    }
    Grads local = backward_rule(node, inputs, output, upstream, want);
    for (std::size_t k = 0; k < local.size(); ++k) {
      if (!local[k] || !node.inputs[k].requires_grad()) continue;
      const std::size_t src = node.inputs[k].node();
      if (!needed[src]) continue;
      grads[src] = grads[src] ? add(*grads[src], *local[k]) : *local[k];
    }
  }

  std::vector<Tensor> result;
  result.reserve(leaves.size());
  for (const Tensor& leaf : leaves) {
    std::optional<Tensor> g;
    if (leaf.requires_grad() && leaf.node() <= last) g = grads[leaf.node()];
    if (!g) {
      result.push_back(Tensor::zeros(leaf.shape()));
    } else {
      result.push_back(create_graph ? *g : g->detach());
    }
  }
  return result;
}

}  // namespace softdistill
