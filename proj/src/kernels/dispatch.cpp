// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <string_view>

#include "softdistill/kernels.hpp"

namespace softdistill::kernels {

#if defined(SOFTDISTILL_HAVE_AVX2)
const KernelTable& avx2_table();
#elif defined(SOFTDISTILL_HAVE_NEON)
const KernelTable& neon_table();
#endif

const KernelTable* simd_table() {
#if defined(SOFTDISTILL_HAVE_AVX2)
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &avx2_table() : nullptr;
#elif defined(SOFTDISTILL_HAVE_NEON)
  return &neon_table();
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable& chosen = [] () -> const KernelTable& {
    const char* env = std::getenv("SOFTDISTILL_KERNELS");
    if (env != nullptr && std::string_view(env) == "scalar") return scalar_table();
    const KernelTable* simd = simd_table();
    return simd != nullptr ? *simd : scalar_table();
  }();
  return chosen;
}

}  // namespace softdistill::kernels
