// SPDX-License-Identifier: Apache-2.0
#include <immintrin.h>

#include "softdistill/kernels.hpp"

namespace softdistill::kernels {

const KernelTable& avx2_table();

namespace {

template <typename Op, typename ScalarOp>
inline void binary(std::span<const double> a, std::span<const double> b, std::span<double> out,
                   Op op, ScalarOp sop) {
  const std::size_t n = out.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va = _mm256_loadu_pd(a.data() + i);
    const __m256d vb = _mm256_loadu_pd(b.data() + i);
    _mm256_storeu_pd(out.data() + i, op(va, vb));
  }
  for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

void add(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  binary(a, b, out, [](__m256d x, __m256d y) { return _mm256_add_pd(x, y); },
         [](double x, double y) { return x + y; });
}

void sub(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  binary(a, b, out, [](__m256d x, __m256d y) { return _mm256_sub_pd(x, y); },
         [](double x, double y) { return x - y; });
}

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  binary(a, b, out, [](__m256d x, __m256d y) { return _mm256_mul_pd(x, y); },
         [](double x, double y) { return x * y; });
}

void div(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  binary(a, b, out, [](__m256d x, __m256d y) { return _mm256_div_pd(x, y); },
         [](double x, double y) { return x / y; });
}

void scale(std::span<const double> a, double c, std::span<double> out) {
  const std::size_t n = out.size();
  const __m256d vc = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out.data() + i, _mm256_mul_pd(_mm256_loadu_pd(a.data() + i), vc));
  }
  for (; i < n; ++i) out[i] = a[i] * c;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  const std::size_t n = y.size();
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x.data() + i));
    _mm256_storeu_pd(y.data() + i, _mm256_add_pd(_mm256_loadu_pd(y.data() + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

inline double hsum(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

double dot(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a.data() + i),
                                             _mm256_loadu_pd(b.data() + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(a.data() + i + 4),
                                             _mm256_loadu_pd(b.data() + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(a.data() + i),
                                             _mm256_loadu_pd(b.data() + i)));
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum(std::span<const double> a) {
  const std::size_t n = a.size();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a.data() + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(a.data() + i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(a.data() + i));
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i];
  return acc;
}

void gemm(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
          std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const __m256d va = _mm256_set1_pd(aip);
      const double* brow = b.data() + p * n;
      std::size_t j = 0;
      for (; j + 4 <= n; j += 4) {
        const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(brow + j));
        _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
      }
      for (; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{"avx2", add, sub, mul, div, scale, axpy, dot, sum, gemm};
  return table;
}

}  // namespace softdistill::kernels
