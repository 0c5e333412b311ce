// SPDX-License-Identifier: Apache-2.0
//
// Checks that no exported distilled image is a near copy of a training patch:
// each image's nearest training patch must lie farther away than the given
// low quantile of the distances between training patches themselves.
#pragma once

#include <cstdint>
#include <vector>

#include "softdistill/dataset.hpp"

namespace softdistill {

struct AuditResult {
  std::vector<double> nearest;  // per image, Euclidean distance to the closest patch
  double threshold = 0.0;       // quantile of inter-patch distances
  std::size_t reference_pairs = 0;
  bool passed = false;
};

/// images are flattened pixel vectors on the same [0,1] scale as the patches.
/// The inter-patch quantile uses every pair among at most max_reference
/// patches (a seeded random subset when there are more); the nearest-neighbor
/// scan always covers every patch.
AuditResult nearest_neighbor_audit(const std::vector<std::vector<double>>& images,
                                   const LabeledImages& patches, double quantile = 0.01,
                                   std::size_t max_reference = 2000, std::uint64_t seed = 0);

}  // namespace softdistill
