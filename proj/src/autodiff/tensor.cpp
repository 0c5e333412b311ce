// SPDX-License-Identifier: Apache-2.0
#include <functional>
#include <numeric>
#include <sstream>
#include <utility>

#include "softdistill/errors.hpp"
#include "tape.hpp"

namespace softdistill {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor() : data_(std::make_shared<const std::vector<double>>(1, 0.0)) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor: zero-sized dimension in shape " + to_string(shape_));
  }
  if (numel(shape_) != data.size()) {
    throw ShapeError("tensor: shape " + to_string(shape_) + " holds " +
                     std::to_string(numel(shape_)) + " values, got " +
                     std::to_string(data.size()));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::from(Shape shape, std::initializer_list<double> values) {
  return Tensor(std::move(shape), std::vector<double>(values));
}

double Tensor::item() const {
  if (size() != 1) {
    throw ShapeError("item: tensor of shape " + to_string(shape_) + " is not a single value");
  }
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor out;
  out.shape_ = shape_;
  out.data_ = data_;
  return out;
}

bool Tensor::same_graph(const Tensor& other) const {
  if (!requires_grad() || !other.requires_grad()) return requires_grad() == other.requires_grad();
  return !tape_.owner_before(other.tape_) && !other.tape_.owner_before(tape_);
}

Graph::Graph() : tape_(std::make_shared<detail::Tape>()) {}

Graph::~Graph() = default;

Tensor Graph::variable(const Tensor& value) {
  Tensor leaf = value.detach();
  const std::size_t id = tape_->nodes.size();
  TensorAccess::attach(leaf, tape_, id);
  detail::Node node;
  node.kind = OpKind::kLeaf;
  node.output = leaf;
  tape_->nodes.push_back(std::move(node));
  return leaf;
}

std::size_t Graph::node_count() const { return tape_->nodes.size(); }

}  // namespace softdistill
