// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <vector>

#include "softdistill/tensor.hpp"

namespace softdistill {

namespace detail {

struct Node {
  OpKind kind = OpKind::kLeaf;
  std::vector<Tensor> inputs;
  OpAttrs attrs;
  Tensor output;
};

struct Tape {
  std::vector<Node> nodes;
};

}  // namespace detail

struct TensorAccess {
  static std::shared_ptr<detail::Tape> tape(const Tensor& t) { return t.tape_.lock(); }
  static bool has_expired_tape(const Tensor& t) {
    return t.node_ != Tensor::kNoNode && t.tape_.expired();
  }
  static void attach(Tensor& t, const std::shared_ptr<detail::Tape>& tape, std::size_t node) {
    t.tape_ = tape;
    t.node_ = node;
  }
};

}  // namespace softdistill
