// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace softdistill {

using Rng = std::mt19937_64;

/// Independent sub-seed for (stream, index); splitmix64 finalizer over the mix.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

/// Named streams so that changing how many draws one consumer makes never
/// shifts another consumer's values.
enum class SeedStream : std::uint64_t {
  kInitWeights = 1,
  kDistilledImages = 2,
  kMinibatch = 3,
  kSubset = 4,
  kBaselineBatches = 5,
  kSynth = 6,
  kEvalModel = 7,
};

inline std::uint64_t derive_seed(std::uint64_t base, SeedStream stream, std::uint64_t index = 0) {
  return derive_seed(base, static_cast<std::uint64_t>(stream), index);
}

std::vector<double> normal_vector(Rng& rng, std::size_t n, double mean = 0.0, double stddev = 1.0);

/// k distinct indices from [0, n), in draw order. k >= n returns a permutation of all n.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t k);

}  // namespace softdistill
