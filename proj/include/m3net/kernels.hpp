#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "m3net/tensor.hpp"

namespace m3net::kernels {

/// Inner-loop arithmetic used by the tensor ops.
///
/// Every variant reduces in the same order as the scalar reference: matrix
/// products accumulate over the inner index in ascending order and are
/// vectorized across output columns only, with separate multiply and add
/// (no FMA). Variants are therefore bit-identical, not merely close.
struct KernelTable {
  const char* name;
  /// c[m×n] += a[m×k] · b[k×n]
  void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b,
                  Real* c);
  /// c[m×n] += a[k×m]ᵀ · b[k×n]
  void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b,
                  Real* c);
  /// y += alpha·x
  void (*axpy)(std::size_t n, Real alpha, const Real* x, Real* y);
  /// out = x + y
  void (*add)(std::size_t n, const Real* x, const Real* y, Real* out);
  /// out = x ⊙ y
  void (*mul)(std::size_t n, const Real* x, const Real* y, Real* out);
  /// out = alpha·x
  void (*scale)(std::size_t n, Real alpha, const Real* x, Real* out);
};

const KernelTable& scalar_table();
/// nullptr when the variant was not compiled in or the CPU lacks it.
const KernelTable* avx2_table();
const KernelTable* neon_table();

/// Kernels used by the ops. Chosen once from the CPU, overridable with the
/// M3NET_KERNELS environment variable (`scalar`, `avx2`, `neon`, `auto`).
const KernelTable& active();

/// Forces a variant by name; throws ConfigError when unavailable.
void select(std::string_view name);

/// Names of the variants usable on this machine, scalar first.
std::vector<std::string_view> available();

}  // namespace m3net::kernels
