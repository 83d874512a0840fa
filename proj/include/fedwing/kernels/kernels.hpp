// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision inner loops. Every kernel has a scalar reference
// implementation; SIMD variants are picked once at startup from the CPU
// capabilities and can be overridden with FEDWING_KERNELS=scalar|avx2.
#pragma once

#include <cstddef>
#include <string_view>

namespace fedwing::kernels {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  const char* name;
  /// c[m x n] (+)= a[m x k] * b[k x n], all row-major and contiguous.
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
                  double* c, bool accumulate);
  double (*dot)(std::size_t n, const double* a, const double* b);
  /// y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
  void (*add)(std::size_t n, const double* a, const double* b, double* out);
  void (*sub)(std::size_t n, const double* a, const double* b, double* out);
  void (*mul)(std::size_t n, const double* a, const double* b, double* out);
  void (*scale)(std::size_t n, double s, const double* x, double* out);
  double (*sum)(std::size_t n, const double* x);
  /// sum_i (a_i - b_i)^2
  double (*squared_distance)(std::size_t n, const double* a, const double* b);
  bool (*all_finite)(std::size_t n, const double* x);
};

const KernelTable& scalar_table();
/// nullptr when the AVX2 variant was not compiled in.
const KernelTable* avx2_table();

bool cpu_supports_avx2();

/// Currently selected table.
const KernelTable& active();
Isa active_isa();
/// Selects a table explicitly; returns false (and leaves the selection alone)
/// when the requested ISA is unavailable on this build or CPU.
bool select(Isa isa);
std::string_view isa_name(Isa isa);

/// Transposed-operand helpers built on gemm_nn: c (+)= op(a) * op(b).
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const double* a,
          const double* b, double* c, bool accumulate);
void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst);

}  // namespace fedwing::kernels
