// SPDX-License-Identifier: Apache-2.0
#include "softdistill/patches.hpp"

#include <algorithm>
#include <cmath>

#include "softdistill/errors.hpp"
#include "softdistill/random.hpp"

namespace softdistill {

char category_symbol(Category c) {
  switch (c) {
    case Category::kIrrelevant: return 'I';
    case Category::kNegative: return 'N';
    case Category::kPositive: return 'P';
    case Category::kDiscarded: return '-';
  }
  return '?';
}

void FullImage::validate() const {
  if (height == 0 || width == 0) throw DataError("image " + id + ": empty image");
  if (pixels.size() != height * width) {
    throw DataError("image " + id + ": pixel count does not match " + std::to_string(height) +
                    "x" + std::to_string(width));
  }
  if (mask.size() != pixels.size()) {
    throw DataError("image " + id + ": mask and pixel shapes differ");
  }
}

void PatchParams::validate() const {
  if (patch_size == 0) throw ConfigError("patches: patch size must be positive");
  if (stride == 0) throw ConfigError("patches: stride must be at least 1");
  if (!(lower > 0.0 && lower < 1.0 && upper > 0.0 && upper < 1.0 && lower < upper)) {
    throw ConfigError("patches: thresholds must satisfy 0 < lower < upper < 1");
  }
}

GridGeometry grid_geometry(std::size_t height, std::size_t width, std::size_t patch_size,
                           std::size_t stride) {
  if (stride == 0) throw ConfigError("patches: stride must be at least 1");
  if (patch_size == 0 || patch_size > height || patch_size > width) {
    throw DataError("patches: patch size " + std::to_string(patch_size) +
                    " does not fit a " + std::to_string(height) + "x" + std::to_string(width) +
                    " image");
  }
  return {(height - patch_size) / stride + 1, (width - patch_size) / stride + 1};
}

PatchGrid::PatchGrid(std::shared_ptr<const FullImage> source, GridGeometry geometry,
                     PatchParams params, std::vector<PatchRecord> records)
    : source_(std::move(source)),
      geometry_(geometry),
      params_(params),
      records_(std::move(records)) {}

std::vector<double> PatchGrid::pixels(std::size_t i) const {
  const PatchRecord& rec = records_.at(i);
  const std::size_t p = params_.patch_size;
  const std::size_t top = rec.row * params_.stride;
  const std::size_t left = rec.col * params_.stride;
  std::vector<double> out(p * p);
  for (std::size_t r = 0; r < p; ++r) {
    const double* src = source_->pixels.data() + (top + r) * source_->width + left;
    std::copy(src, src + p, out.begin() + static_cast<std::ptrdiff_t>(r * p));
  }
  return out;
}

Category auto_label(double coverage, ImageLabel image_label, double lower, double upper) {
  if (coverage < lower) return Category::kIrrelevant;
  if (coverage > upper) {
    return image_label == ImageLabel::kGastritis ? Category::kPositive : Category::kNegative;
  }
  return Category::kDiscarded;
}

PatchGrid extract_patches(std::shared_ptr<const FullImage> image, const PatchParams& params) {
  params.validate();
  image->validate();
  const GridGeometry geo = grid_geometry(image->height, image->width, params.patch_size,
                                         params.stride);
  const std::size_t h = image->height;
  const std::size_t w = image->width;

  // Summed-area table of the mask, (h+1) x (w+1).
  std::vector<std::uint64_t> area((h + 1) * (w + 1), 0);
  for (std::size_t r = 0; r < h; ++r) {
    std::uint64_t row_sum = 0;
    for (std::size_t c = 0; c < w; ++c) {
      row_sum += image->mask[r * w + c] != 0 ? 1 : 0;
      area[(r + 1) * (w + 1) + c + 1] = area[r * (w + 1) + c + 1] + row_sum;
    }
  }

  const std::size_t p = params.patch_size;
  const double cells = static_cast<double>(p * p);
  std::vector<PatchRecord> records;
  records.reserve(geo.rows * geo.cols);
  for (std::size_t r = 0; r < geo.rows; ++r) {
    for (std::size_t c = 0; c < geo.cols; ++c) {
      const std::size_t y0 = r * params.stride, x0 = c * params.stride;
      const std::size_t y1 = y0 + p, x1 = x0 + p;
      const std::uint64_t inside = area[y1 * (w + 1) + x1] - area[y0 * (w + 1) + x1] -
                                   area[y1 * (w + 1) + x0] + area[y0 * (w + 1) + x0];
      PatchRecord rec;
      rec.row = r;
      rec.col = c;
      rec.coverage = static_cast<double>(inside) / cells;
      rec.category = auto_label(rec.coverage, image->label, params.lower, params.upper);
      records.push_back(rec);
    }
  }
  return PatchGrid(std::move(image), geo, params, std::move(records));
}

PatchGrid extract_patches(const FullImage& image, const PatchParams& params) {
  return extract_patches(std::make_shared<const FullImage>(image), params);
}

PatchDataset build_patch_dataset(std::span<const FullImage> images, const PatchParams& params) {
  if (images.empty()) throw DataError("patches: no images given");
  params.validate();
  PatchDataset out;
  out.images = LabeledImages({1, params.patch_size, params.patch_size});
  for (const FullImage& image : images) {
    const PatchGrid grid = extract_patches(image, params);
    out.total += grid.size();
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Category cat = grid[i].category;
      if (cat == Category::kDiscarded) {
        ++out.discarded;
        continue;
      }
      ++out.counts[static_cast<std::size_t>(cat)];
      out.images.push_back(grid.pixels(i), static_cast<int>(cat));
    }
  }
  return out;
}

// --- synthetic data ------------------------------------------------------------

void SynthSpec::validate() const {
  if (image_count == 0) throw ConfigError("synth: image count must be positive");
  if (height < 4 || width < 4) throw ConfigError("synth: images must be at least 4x4");
  if (positive_fraction < 0.0 || positive_fraction > 1.0) {
    throw ConfigError("synth: positive fraction must be in [0, 1]");
  }
  if (!(organ_radius > 0.0) || organ_radius > 0.5) {
    throw ConfigError("synth: organ radius must be in (0, 0.5]");
  }
  if (center_jitter < 0.0 || center_jitter > 0.5) {
    throw ConfigError("synth: center jitter must be in [0, 0.5]");
  }
  if (noise < 0.0 || snr < 0.0) throw ConfigError("synth: noise and snr must be non-negative");
  if (background < 0.0 || background > 1.0 || foreground < 0.0 || foreground > 1.0) {
    throw ConfigError("synth: intensities must be in [0, 1]");
  }
  if (texture_period == 0) throw ConfigError("synth: texture period must be positive");
}

std::vector<FullImage> synth_generate(const SynthSpec& spec) {
  spec.validate();
  const auto positives =
      static_cast<std::size_t>(std::llround(spec.positive_fraction * static_cast<double>(spec.image_count)));
  const double side = static_cast<double>(std::min(spec.height, spec.width));
  const double amplitude = spec.snr * spec.noise;

  std::vector<FullImage> images;
  images.reserve(spec.image_count);
  for (std::size_t n = 0; n < spec.image_count; ++n) {
    Rng rng(derive_seed(spec.seed, SeedStream::kSynth, n));
    std::uniform_real_distribution<double> jitter(-spec.center_jitter, spec.center_jitter);
    std::uniform_real_distribution<double> stretch(0.85, 1.15);
    std::normal_distribution<double> noise(0.0, spec.noise);

    FullImage img;
    img.height = spec.height;
    img.width = spec.width;
    img.label = n < positives ? ImageLabel::kGastritis : ImageLabel::kNonGastritis;
    img.id = "synth_" + std::to_string(n);
    img.pixels.resize(spec.height * spec.width);
    img.mask.resize(spec.height * spec.width);

    const double cy = 0.5 * static_cast<double>(spec.height) + jitter(rng) * side;
    const double cx = 0.5 * static_cast<double>(spec.width) + jitter(rng) * side;
    const double ry = spec.organ_radius * side * stretch(rng);
    const double rx = spec.organ_radius * side * stretch(rng);
    const bool positive = img.label == ImageLabel::kGastritis;

    for (std::size_t r = 0; r < spec.height; ++r) {
      for (std::size_t c = 0; c < spec.width; ++c) {
        const double dy = (static_cast<double>(r) + 0.5 - cy) / ry;
        const double dx = (static_cast<double>(c) + 0.5 - cx) / rx;
        const bool inside = dy * dy + dx * dx <= 1.0;
        double v = inside ? spec.foreground : spec.background;
        if (inside && positive) {
          const bool phase = ((r / spec.texture_period) + (c / spec.texture_period)) % 2 == 0;
          v += 0.5 * amplitude + 0.5 * amplitude * (phase ? 1.0 : -1.0);
        }
        v += noise(rng);
        img.pixels[r * spec.width + c] = std::clamp(v, 0.0, 1.0);
        img.mask[r * spec.width + c] = inside ? 1 : 0;
      }
    }
    images.push_back(std::move(img));
  }
  return images;
}

LabeledImages make_blob_patches(const BlobSpec& spec) {
  if (spec.classes < 2 || spec.per_class == 0 || spec.side == 0) {
    throw ConfigError("blobs: need at least two classes, one sample, and a positive side");
  }
  const std::size_t n = spec.side * spec.side;
  Rng rng(derive_seed(spec.seed, SeedStream::kSynth));
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::vector<std::vector<double>> centers(spec.classes, std::vector<double>(n));
  for (auto& center : centers) {
    for (double& v : center) v = uniform(rng);
  }

  LabeledImages out({1, spec.side, spec.side});
  std::normal_distribution<double> noise(0.0, spec.spread);
  std::vector<double> sample(n);
  // Interleave classes so any prefix is roughly balanced.
  for (std::size_t k = 0; k < spec.per_class; ++k) {
    for (std::size_t c = 0; c < spec.classes; ++c) {
      for (std::size_t j = 0; j < n; ++j) sample[j] = centers[c][j] + noise(rng);
      out.push_back(sample, static_cast<int>(c));
    }
  }
  return out;
}

}  // namespace softdistill
