// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode automatic differentiation over dense double tensors.
//
// A Graph is an append-only tape. Tensors created through Graph::variable, and
// every op result that depends on one, carry a node on that tape. Ops whose
// inputs are all constants produce constants and record nothing.
//
// grad() walks the tape backwards from the loss. With create_graph set, the
// backward formulas are themselves recorded on the same tape, so the returned
// gradients can be differentiated again.
#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace softdistill {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {
struct Tape;
}

class Graph;

class Tensor {
 public:
  static constexpr std::size_t kNoNode = static_cast<std::size_t>(-1);

  /// Rank-0 zero.
  Tensor();
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor from(Shape shape, std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_->size(); }
  std::span<const double> data() const noexcept { return *data_; }
  double operator[](std::size_t i) const { return (*data_)[i]; }
  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const noexcept { return node_ != kNoNode; }
  std::size_t node() const noexcept { return node_; }
  /// Same values, no graph connection.
  Tensor detach() const;

  /// True when both tensors share the same graph tape (or both are constants).
  bool same_graph(const Tensor& other) const;

 private:
  friend class Graph;
  friend struct TensorAccess;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::weak_ptr<detail::Tape> tape_;
  std::size_t node_ = kNoNode;
};

/// Recording scope. Dropping the Graph invalidates every node recorded on it;
/// tensors that outlive it keep their values but can no longer join an op with
/// other graph tensors.
class Graph {
 public:
  Graph();
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;
  ~Graph();

  /// Leaf tensor that gradients can be taken with respect to.
  Tensor variable(const Tensor& value);
  std::size_t node_count() const;

 private:
  std::shared_ptr<detail::Tape> tape_;
};

enum class OpKind : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kScalarMul,
  kMatMul,
  kTranspose,
  kConv2d,
  kConv2dInputGrad,
  kConv2dWeightGrad,
  kRelu,
  kExp,
  kLog,
  kSum,
  kMean,
  kSoftmax,
  kLogSoftmax,
  kReshape,
  kMaxPool2d,
  kMaxPoolScatter,
};

const char* op_name(OpKind kind);

/// Non-tensor operands. Which fields matter depends on the op.
struct OpAttrs {
  double scalar = 0.0;            // kScalarMul
  std::size_t stride = 1;         // conv / pool
  std::size_t padding = 0;        // conv
  std::size_t window = 2;         // pool
  Shape shape;                    // kReshape target; grad ops: shape of the result
  std::vector<std::size_t> index; // pooling argmax positions (flat input offsets)
};

/// Generic op application: validates shapes, computes the forward value, and
/// records a node when any input is graph-connected. Throws ShapeError naming
/// the op and the offending shapes.
Tensor record(OpKind kind, std::span<const Tensor> inputs, const OpAttrs& attrs = {});

/// Elementwise; one operand may be rank-0 and is broadcast over the other.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

/// (m x k) * (k x n)
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// NCHW input, OCKK weight, zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride = 1,
              std::size_t padding = 0);
/// Adjoint of conv2d with respect to its input, for a given upstream gradient.
Tensor conv2d_input_grad(const Tensor& grad_out, const Tensor& weight, const Shape& input_shape,
                         std::size_t stride, std::size_t padding);
/// Adjoint of conv2d with respect to its weight.
Tensor conv2d_weight_grad(const Tensor& input, const Tensor& grad_out, const Shape& weight_shape,
                          std::size_t stride, std::size_t padding);

Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Row-wise over the last axis of a rank-2 tensor.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Non-overlapping-by-default max pooling over NCHW; floor on the output size.
Tensor max_pool2d(const Tensor& a, std::size_t window = 2, std::size_t stride = 2);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

/// Gradients of a rank-0 loss with respect to each leaf. Leaves the loss does
/// not depend on receive zeros. With create_graph the results stay connected
/// to the graph; otherwise they are constants.
std::vector<Tensor> grad(const Tensor& loss, std::span<const Tensor> leaves,
                         bool create_graph = false);

}  // namespace softdistill
