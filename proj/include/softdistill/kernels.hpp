// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision inner loops used by the tensor ops. Every kernel has a
// portable scalar reference; vector variants (AVX2 on x86-64, NEON on aarch64)
// are picked once at startup from the CPU feature set.
//
// Elementwise kernels and gemm are bit-identical across variants: gemm uses the
// same i-k-j accumulation order in every variant and never contracts to FMA.
// Reductions (dot, sum) use several partial accumulators in the vector
// variants, so they agree with the reference only to rounding.
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace softdistill::kernels {

struct KernelTable {
  std::string_view name;

  // out[i] = a[i] op b[i]
  void (*add)(std::span<const double> a, std::span<const double> b, std::span<double> out);
  void (*sub)(std::span<const double> a, std::span<const double> b, std::span<double> out);
  void (*mul)(std::span<const double> a, std::span<const double> b, std::span<double> out);
  void (*div)(std::span<const double> a, std::span<const double> b, std::span<double> out);
  // out[i] = a[i] * c
  void (*scale)(std::span<const double> a, double c, std::span<double> out);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, std::span<const double> x, std::span<double> y);
  double (*dot)(std::span<const double> a, std::span<const double> b);
  double (*sum)(std::span<const double> a);
  // C (m x n) = A (m x k) * B (k x n), all row-major, C overwritten.
  void (*gemm)(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
               std::span<const double> b, std::span<double> c);
};

const KernelTable& scalar_table();

/// Vector table for this build and CPU, or nullptr when unavailable.
const KernelTable* simd_table();

/// The table used by tensor ops. Chosen once: the vector table when the CPU
/// supports it, unless SOFTDISTILL_KERNELS=scalar is set in the environment.
const KernelTable& active();

}  // namespace softdistill::kernels
