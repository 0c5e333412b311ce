// SPDX-License-Identifier: Apache-2.0
//
// Exhaustive vote checks shared by the unit tests and the acceptance run.
// Every assignment of {I, N, P} to grids of 0..max_patches patches is voted at
// every epsilon a/b with b <= 10, and compared with integer arithmetic.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "softdistill/classify.hpp"

namespace vote_properties {

using softdistill::Category;

struct Findings {
  std::size_t grids = 0;
  std::size_t checks = 0;
  std::size_t boundary_hits = 0;  // ratio exactly epsilon
  std::vector<std::string> failures;
};

struct Fraction {
  std::size_t num, den;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

inline std::vector<Fraction> epsilon_grid() {
  std::vector<Fraction> out;
  for (std::size_t b = 1; b <= 10; ++b) {
    for (std::size_t a = 0; a <= b; ++a) out.push_back({a, b});
  }
  return out;
}

inline std::vector<std::vector<Category>> all_grids(std::size_t max_patches) {
  std::vector<std::vector<Category>> out{{}};
  std::vector<std::vector<Category>> layer{{}};
  for (std::size_t n = 1; n <= max_patches; ++n) {
    std::vector<std::vector<Category>> next;
    for (const auto& g : layer) {
      for (Category c : {Category::kIrrelevant, Category::kNegative, Category::kPositive}) {
        auto h = g;
        h.push_back(c);
        next.push_back(std::move(h));
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    layer = std::move(next);
  }
  return out;
}

inline std::string describe(const std::vector<Category>& g) {
  std::string s;
  for (Category c : g) s += softdistill::category_symbol(c);
  return "[" + s + "]";
}

/// Decision rule, boundary inclusivity and I-patch invariance.
inline Findings check_votes(std::size_t max_patches) {
  Findings f;
  const auto eps = epsilon_grid();
  for (const auto& grid : all_grids(max_patches)) {
    ++f.grids;
    std::size_t p = 0, n = 0;
    for (Category c : grid) {
      p += c == Category::kPositive;
      n += c == Category::kNegative;
    }
    for (const Fraction& e : eps) {
      ++f.checks;
      const auto v = softdistill::vote(grid, e.value());
      // p / (p + n) >= a / b  <=>  p * b >= a * (p + n)
      const int expected = p + n > 0 && p * e.den >= e.num * (p + n) ? 1 : 0;
      if (p + n > 0 && p * e.den == e.num * (p + n)) ++f.boundary_hits;
      if (v.decision != expected || v.no_evidence != (p + n == 0)) {
        f.failures.push_back(describe(grid) + " at " + std::to_string(e.value()));
        continue;
      }
      // Irrelevant patches anywhere in the grid change nothing.
      for (std::size_t at = 0; at <= grid.size(); ++at) {
        auto padded = grid;
        padded.insert(padded.begin() + static_cast<std::ptrdiff_t>(at), 2, Category::kIrrelevant);
        if (softdistill::vote(padded, e.value()).decision != v.decision) {
          f.failures.push_back(describe(padded) + " changed by I patches");
        }
      }
    }
  }
  return f;
}

/// Treats every grid as one image with the given truth labels and sweeps
/// epsilon upward: decisions never flip 0 -> 1, so Sen never rises and Spe
/// never falls.
inline Findings check_monotonicity(std::size_t max_patches, std::uint64_t truth_seed) {
  Findings f;
  const auto grids = all_grids(max_patches);
  std::vector<softdistill::FullImage> images(grids.size());
  std::uint64_t state = truth_seed;
  for (std::size_t i = 0; i < images.size(); ++i) {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    images[i].label = (state >> 33) % 2 ? softdistill::ImageLabel::kGastritis
                                        : softdistill::ImageLabel::kNonGastritis;
  }
  images[0].label = softdistill::ImageLabel::kGastritis;
  images[1].label = softdistill::ImageLabel::kNonGastritis;

  std::vector<double> eps;
  for (int k = 0; k <= 100; ++k) eps.push_back(k / 100.0);
  std::vector<int> previous;
  softdistill::Metrics last{};
  for (std::size_t k = 0; k < eps.size(); ++k) {
    const auto report = softdistill::score_predictions(grids, images, eps[k]);
    std::vector<int> decisions;
    for (const auto& g : grids) decisions.push_back(softdistill::vote(g, eps[k]).decision);
    if (k > 0) {
      for (std::size_t i = 0; i < grids.size(); ++i) {
        ++f.checks;
        if (previous[i] == 0 && decisions[i] == 1) {
          f.failures.push_back(describe(grids[i]) + " flipped 0->1 at " + std::to_string(eps[k]));
        }
      }
      if (report.scores.sen > last.sen || report.scores.spe < last.spe) {
        f.failures.push_back("Sen/Spe moved the wrong way at " + std::to_string(eps[k]));
      }
    }
    previous = std::move(decisions);
    last = report.scores;
  }
  f.grids = grids.size();
  return f;
}

}  // namespace vote_properties
