// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "fedwing/kernels/kernels.hpp"

namespace fedwing::kernels {

#ifndef FEDWING_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

bool cpu_supports_avx2() {
#if defined(FEDWING_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const KernelTable* initial_table() {
  const char* env = std::getenv("FEDWING_KERNELS");
  const std::string forced = env ? env : "";
  if (forced == "scalar") return &scalar_table();
  if (cpu_supports_avx2() && avx2_table() != nullptr) return avx2_table();
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_table()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

Isa active_isa() { return active().isa; }

bool select(Isa isa) {
  if (isa == Isa::kScalar) {
    current().store(&scalar_table(), std::memory_order_release);
    return true;
  }
  if (!cpu_supports_avx2() || avx2_table() == nullptr) return false;
  current().store(avx2_table(), std::memory_order_release);
  return true;
}

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock) {
    const std::size_t i1 = std::min(rows, i0 + kBlock);
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock) {
      const std::size_t j1 = std::min(cols, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) dst[j * rows + i] = src[i * cols + j];
      }
    }
  }
}

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate) {
  thread_local std::vector<double> a_buf;
  thread_local std::vector<double> b_buf;
  const double* an = a;
  const double* bn = b;
  if (trans_a) {
    // a is stored k x m
    a_buf.resize(m * k);
    transpose(k, m, a, a_buf.data());
    an = a_buf.data();
  }
  if (trans_b) {
    // b is stored n x k
    b_buf.resize(k * n);
    transpose(n, k, b, b_buf.data());
    bn = b_buf.data();
  }
  active().gemm_nn(m, n, k, an, bn, c, accumulate);
}

}  // namespace fedwing::kernels
