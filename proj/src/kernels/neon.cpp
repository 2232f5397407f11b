#include <arm_neon.h>

#include "m3net/kernels.hpp"

namespace m3net::kernels {
namespace {

inline void row_axpy(std::size_t n, Real s, const Real* b, Real* ci) {
  const float64x2_t vs = vdupq_n_f64(s);
  std::size_t j = 0;
  for (; j + 2 <= n; j += 2) {
    // vmulq + vaddq, not vfmaq: rounding must match the scalar loop.
    float64x2_t c0 = vaddq_f64(vld1q_f64(ci + j), vmulq_f64(vs, vld1q_f64(b + j)));
    vst1q_f64(ci + j, c0);
  }
  for (; j < n; ++j) ci[j] += s * b[j];
}

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) row_axpy(n, a[i * k + p], b + p * n, c + i * n);
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const Real* a, const Real* b, Real* c) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) row_axpy(n, a[p * m + i], b + p * n, c + i * n);
  }
}

void axpy(std::size_t n, Real alpha, const Real* x, Real* y) { row_axpy(n, alpha, x, y); }

void add(std::size_t n, const Real* x, const Real* y, Real* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(std::size_t n, const Real* x, const Real* y, Real* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(std::size_t n, Real alpha, const Real* x, Real* out) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = alpha * x[i];
}

constexpr KernelTable kNeon{"neon", gemm_nn, gemm_tn, axpy, add, mul, scale};

}  // namespace

const KernelTable* neon_table() { return &kNeon; }

}  // namespace m3net::kernels
