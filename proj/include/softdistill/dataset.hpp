// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "softdistill/tensor.hpp"

namespace softdistill {

/// Flat store of equally shaped images with integer class labels.
class LabeledImages {
 public:
  LabeledImages() = default;
  /// image_shape is (channels, height, width).
  explicit LabeledImages(Shape image_shape);

  const Shape& image_shape() const noexcept { return image_shape_; }
  std::size_t image_size() const noexcept { return image_size_; }
  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }

  void push_back(std::span<const double> pixels, int label);

  std::span<const double> pixels(std::size_t i) const;
  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<int>& labels() const noexcept { return labels_; }

  /// (n, C, H, W) batch of the selected images.
  Tensor batch(std::span<const std::size_t> indices) const;
  std::vector<int> batch_labels(std::span<const std::size_t> indices) const;
  Tensor all() const;

  /// Number of images per class index in [0, classes).
  std::vector<std::size_t> class_counts(std::size_t classes) const;

 private:
  Shape image_shape_;
  std::size_t image_size_ = 0;
  std::vector<double> pixels_;
  std::vector<int> labels_;
};

}  // namespace softdistill
