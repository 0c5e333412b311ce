// SPDX-License-Identifier: Apache-2.0
//
// Full grayscale images -> fixed-size labeled patches.
//
// A patch is irrelevant (I) when less than `lower` of it lies inside the organ
// mask, negative (N) or positive (P) when more than `upper` does (N/P taken
// from the whole image's label), and discarded otherwise. Both comparisons are
// strict, so coverage exactly at a threshold is discarded.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "softdistill/dataset.hpp"

namespace softdistill {

/// Patch classes double as model class indices.
enum class Category : int { kIrrelevant = 0, kNegative = 1, kPositive = 2, kDiscarded = 3 };

inline constexpr std::size_t kPatchClasses = 3;

char category_symbol(Category c);

enum class ImageLabel : int { kNonGastritis = 0, kGastritis = 1 };

struct FullImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;       // row-major intensities in [0, 1]
  std::vector<std::uint8_t> mask;   // nonzero inside the organ
  ImageLabel label = ImageLabel::kNonGastritis;
  std::string id;

  double at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  /// Throws DataError when pixel/mask sizes disagree with the dimensions.
  void validate() const;
};

struct PatchParams {
  std::size_t patch_size = 299;
  std::size_t stride = 50;
  double lower = 0.01;
  double upper = 0.85;

  /// Throws ConfigError.
  void validate() const;
};

struct PatchRecord {
  std::size_t row = 0;  // grid position
  std::size_t col = 0;
  double coverage = 0.0;
  Category category = Category::kDiscarded;
};

struct GridGeometry {
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// floor((side - p) / s) + 1 positions per axis; only patches fully inside.
/// Throws DataError when the patch is larger than the image.
GridGeometry grid_geometry(std::size_t height, std::size_t width, std::size_t patch_size,
                           std::size_t stride);

class PatchGrid {
 public:
  PatchGrid(std::shared_ptr<const FullImage> source, GridGeometry geometry, PatchParams params,
            std::vector<PatchRecord> records);

  std::size_t rows() const noexcept { return geometry_.rows; }
  std::size_t cols() const noexcept { return geometry_.cols; }
  std::size_t size() const noexcept { return records_.size(); }
  const PatchParams& params() const noexcept { return params_; }
  const std::vector<PatchRecord>& records() const noexcept { return records_; }
  const PatchRecord& operator[](std::size_t i) const { return records_[i]; }
  const FullImage& source() const noexcept { return *source_; }

  /// Copy of the p x p source pixels of patch i, row-major.
  std::vector<double> pixels(std::size_t i) const;

 private:
  std::shared_ptr<const FullImage> source_;
  GridGeometry geometry_;
  PatchParams params_;
  std::vector<PatchRecord> records_;
};

Category auto_label(double coverage, ImageLabel image_label, double lower = 0.01,
                    double upper = 0.85);

/// Patch (r, c) starts at pixel (r * stride, c * stride). Coverage and
/// category are filled in for every position.
PatchGrid extract_patches(std::shared_ptr<const FullImage> image, const PatchParams& params);
PatchGrid extract_patches(const FullImage& image, const PatchParams& params);

struct PatchDataset {
  LabeledImages images;  // (1, p, p) patches, labels are Category values 0..2
  std::array<std::size_t, kPatchClasses> counts{};
  std::size_t total = 0;
  std::size_t discarded = 0;
};

/// Every non-discarded patch of every image, in image then row-major order.
PatchDataset build_patch_dataset(std::span<const FullImage> images, const PatchParams& params);

// --- synthetic data ------------------------------------------------------------

/// Desk-scale stand-in for real scans: a bright elliptical organ on a dark
/// background; positive images add a brightness lift and a fine checker
/// texture inside the organ, scaled by snr.
struct SynthSpec {
  std::size_t image_count = 20;
  std::size_t height = 48;
  std::size_t width = 48;
  double positive_fraction = 0.5;
  double organ_radius = 0.35;   // fraction of the shorter side
  double center_jitter = 0.08;  // fraction of the shorter side
  double background = 0.15;
  double foreground = 0.55;
  double noise = 0.05;
  double snr = 6.0;
  std::size_t texture_period = 2;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
};

std::vector<FullImage> synth_generate(const SynthSpec& spec);

/// Classes drawn as isotropic Gaussian clouds around random per-class
/// templates in pixel space.
struct BlobSpec {
  std::size_t classes = 3;
  std::size_t per_class = 300;
  std::size_t side = 8;
  double spread = 0.3;
  std::uint64_t seed = 0;
};

LabeledImages make_blob_patches(const BlobSpec& spec);

}  // namespace softdistill
