// SPDX-License-Identifier: Apache-2.0
#include <arm_neon.h>

#include "softdistill/kernels.hpp"

namespace softdistill::kernels {

const KernelTable& neon_table();

namespace {

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  std::size_t i = 0;
  for (; i + 2 <= out.size(); i += 2) {
    vst1q_f64(out.data() + i, vaddq_f64(vld1q_f64(a.data() + i), vld1q_f64(b.data() + i)));
  }
  for (; i < out.size(); ++i) out[i] = a[i] + b[i];
}

void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  std::size_t i = 0;
  for (; i + 2 <= out.size(); i += 2) {
    vst1q_f64(out.data() + i, vsubq_f64(vld1q_f64(a.data() + i), vld1q_f64(b.data() + i)));
  }
  for (; i < out.size(); ++i) out[i] = a[i] - b[i];
}

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  std::size_t i = 0;
  for (; i + 2 <= out.size(); i += 2) {
    vst1q_f64(out.data() + i, vmulq_f64(vld1q_f64(a.data() + i), vld1q_f64(b.data() + i)));
  }
  for (; i < out.size(); ++i) out[i] = a[i] * b[i];
}

void div(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  std::size_t i = 0;
  for (; i + 2 <= out.size(); i += 2) {
    vst1q_f64(out.data() + i, vdivq_f64(vld1q_f64(a.data() + i), vld1q_f64(b.data() + i)));
  }
  for (; i < out.size(); ++i) out[i] = a[i] / b[i];
}

void scale(std::span<const double> a, double c, std::span<double> out) {
  const float64x2_t vc = vdupq_n_f64(c);
  std::size_t i = 0;
  for (; i + 2 <= out.size(); i += 2) {
    vst1q_f64(out.data() + i, vmulq_f64(vld1q_f64(a.data() + i), vc));
  }
  for (; i < out.size(); ++i) out[i] = a[i] * c;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= y.size(); i += 2) {
    const float64x2_t prod = vmulq_f64(va, vld1q_f64(x.data() + i));
    vst1q_f64(y.data() + i, vaddq_f64(vld1q_f64(y.data() + i), prod));
  }
  for (; i < y.size(); ++i) y[i] += alpha * x[i];
}

double dot(std::span<const double> a, std::span<const double> b) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= a.size(); i += 2) {
    acc = vaddq_f64(acc, vmulq_f64(vld1q_f64(a.data() + i), vld1q_f64(b.data() + i)));
  }
  double total = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (; i < a.size(); ++i) total += a[i] * b[i];
  return total;
}

double sum(std::span<const double> a) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= a.size(); i += 2) acc = vaddq_f64(acc, vld1q_f64(a.data() + i));
  double total = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (; i < a.size(); ++i) total += a[i];
  return total;
}

void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
          std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const float64x2_t va = vdupq_n_f64(aip);
      const double* brow = b.data() + p * n;
      std::size_t j = 0;
      for (; j + 2 <= n; j += 2) {
        const float64x2_t prod = vmulq_f64(va, vld1q_f64(brow + j));
        vst1q_f64(crow + j, vaddq_f64(vld1q_f64(crow + j), prod));
      }
      for (; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable table{"neon", add, sub, mul, div, scale, axpy, dot, sum, gemm};
  return table;
}

}  // namespace softdistill::kernels
