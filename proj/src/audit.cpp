// SPDX-License-Identifier: Apache-2.0
#include "softdistill/audit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "softdistill/errors.hpp"
#include "softdistill/random.hpp"

namespace softdistill {

namespace {

double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

AuditResult nearest_neighbor_audit(const std::vector<std::vector<double>>& images,
                                   const LabeledImages& patches, double quantile,
                                   std::size_t max_reference, std::uint64_t seed) {
  if (patches.size() < 2) throw DataError("audit: need at least two training patches");
  if (!(quantile >= 0.0 && quantile <= 1.0)) throw ConfigError("audit: quantile must be in [0, 1]");
  const std::size_t dim = patches.image_size();
  for (const auto& img : images) {
    if (img.size() != dim) throw ShapeError("audit: image size differs from patch size");
  }

  std::vector<std::size_t> ref(patches.size());
  std::iota(ref.begin(), ref.end(), 0);
  if (max_reference >= 2 && ref.size() > max_reference) {
    Rng rng(seed);
    ref = sample_without_replacement(rng, patches.size(), max_reference);
  }
  std::vector<double> pair_distances;
  pair_distances.reserve(ref.size() * (ref.size() - 1) / 2);
  for (std::size_t a = 0; a < ref.size(); ++a) {
    for (std::size_t b = a + 1; b < ref.size(); ++b) {
      pair_distances.push_back(distance(patches.pixels(ref[a]), patches.pixels(ref[b])));
    }
  }
  const auto k = static_cast<std::size_t>(
      std::floor(quantile * static_cast<double>(pair_distances.size() - 1)));
  std::nth_element(pair_distances.begin(), pair_distances.begin() + static_cast<std::ptrdiff_t>(k),
                   pair_distances.end());

  AuditResult out;
  out.threshold = pair_distances[k];
  out.reference_pairs = pair_distances.size();
  out.passed = true;
  for (const auto& img : images) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < patches.size(); ++i) {
      best = std::min(best, distance(img, patches.pixels(i)));
    }
    out.nearest.push_back(best);
    out.passed = out.passed && best > out.threshold;
  }
  return out;
}

}  // namespace softdistill
