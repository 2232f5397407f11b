#include <immintrin.h>

#include "m3net/kernels.hpp"

namespace m3net::kernels {
namespace {

// Row update ci[0..n) += s·b[0..n), four lanes at a time.
inline void row_axpy(std::size_t n, Real s, const Real* b, Real* ci) {
  const __m256d vs = _mm256_set1_pd(s);
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) {
    __m256d c0 = _mm256_loadu_pd(ci + j);
    __m256d c1 = _mm256_loadu_pd(ci + j + 4);
    c0 = _mm256_add_pd(c0, _mm256_mul_pd(vs, _mm256_loadu_pd(b + j)));
    c1 = _mm256_add_pd(c1, _mm256_mul_pd(vs, _mm256_loadu_pd(b + j + 4)));
    _mm256_storeu_pd(ci + j, c0);
    _mm256_storeu_pd(ci + j + 4, c1);
  }
  for (; j + 4 <= n; j += 4) {
    __m256d c0 = _mm256_loadu_pd(ci + j);
    c0 = _mm256_add_pd(c0, _mm256_mul_pd(vs, _mm256_loadu_pd(b + j)));
    _mm256_storeu_pd(ci + j, c0);
  }
  for (; j < n; ++j) ci[j] += s * b[j];
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) row_axpy(n, a[i * k + p], b + p * n, ci);
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const Real* ap = a + p * m;
    const Real* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) row_axpy(n, ap[i], bp, c + i * n);
  }
}

void axpy(std::size_t n, Real alpha, const Real* x, Real* y) { row_axpy(n, alpha, x, y); }

void add(std::size_t n, const Real* x, const Real* y, Real* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const Real* x, const Real* y, Real* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(std::size_t n, Real alpha, const Real* x, Real* out) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

constexpr KernelTable kAvx2{"avx2", gemm_nn, gemm_tn, axpy, add, mul, scale};

}  // namespace

const KernelTable* avx2_table() {
  if (!__builtin_cpu_supports("avx2")) return nullptr;
  return &kAvx2;
}

}  // namespace m3net::kernels
